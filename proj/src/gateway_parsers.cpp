#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include "forge/error.hpp"
#include "forge/expert_gateway.hpp"

namespace forge {
namespace {

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Case-insensitive search for an ASCII marker.
size_t find_marker(std::string_view text, std::string_view marker, size_t from = 0) {
  if (marker.size() > text.size()) return std::string_view::npos;
  for (size_t i = from; i + marker.size() <= text.size(); ++i) {
    bool match = true;
    for (size_t k = 0; k < marker.size(); ++k) {
      if (std::tolower(static_cast<unsigned char>(text[i + k])) !=
          std::tolower(static_cast<unsigned char>(marker[k]))) {
        match = false;
        break;
      }
    }
    if (match) return i;
  }
  return std::string_view::npos;
}

const std::set<std::string>& meta_terms() {
  static const std::set<std::string> kTerms = {"image",    "photo",        "picture",  "portrait",
                                               "photograph", "illustration", "painting", "drawing",
                                               "sketch",   "artwork"};
  return kTerms;
}

const std::map<std::string, std::string>& irregular_plurals() {
  static const std::map<std::string, std::string> kTable = {
      {"people", "person"}, {"men", "man"},        {"women", "woman"},    {"children", "child"},
      {"mice", "mouse"},    {"feet", "foot"},      {"teeth", "tooth"},    {"geese", "goose"},
      {"leaves", "leaf"},   {"knives", "knife"},   {"shelves", "shelf"},  {"wolves", "wolf"},
      {"loaves", "loaf"},   {"halves", "half"},    {"wives", "wife"},     {"scarves", "scarf"},
      {"tomatoes", "tomato"}, {"potatoes", "potato"}, {"heroes", "hero"}, {"oxen", "ox"},
      {"cacti", "cactus"},  {"dice", "die"}};
  return kTable;
}

const std::set<std::string>& invariant_nouns() {
  static const std::set<std::string> kNouns = {
      "sheep", "fish", "deer", "series", "species", "pants", "jeans", "scissors", "shorts",
      "trousers", "glasses", "sunglasses", "goggles", "headphones", "clothes", "grass", "news"};
  return kNouns;
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string singularize(const std::string& word) {
  if (invariant_nouns().count(word)) return word;
  if (auto it = irregular_plurals().find(word); it != irregular_plurals().end()) return it->second;
  if (word.size() <= 3) return word;
  if (ends_with(word, "ies")) return word.substr(0, word.size() - 3) + "y";
  if (ends_with(word, "sses") || ends_with(word, "xes") || ends_with(word, "ches") || ends_with(word, "shes") ||
      ends_with(word, "zes")) {
    return word.substr(0, word.size() - 2);
  }
  if (ends_with(word, "ss") || ends_with(word, "us") || ends_with(word, "is") || ends_with(word, "ous")) {
    return word;
  }
  if (ends_with(word, "s")) return word.substr(0, word.size() - 1);
  return word;
}

// Splits the inside of a Python-style list into raw items. Throws
// kUnbalancedList on unterminated quotes or brackets.
std::vector<std::string> split_list_items(std::string_view body) {
  std::vector<std::string> items;
  std::string current;
  bool have_item = false;
  size_t i = 0;
  auto flush = [&] {
    std::string t = trim(current);
    if (!t.empty() || have_item) items.push_back(t);
    current.clear();
    have_item = false;
  };
  while (i < body.size()) {
    const char c = body[i];
    if (c == '"' || c == '\'') {
      const char quote = c;
      ++i;
      std::string value;
      bool closed = false;
      while (i < body.size()) {
        if (body[i] == '\\' && i + 1 < body.size()) {
          value += body[i + 1];
          i += 2;
          continue;
        }
        if (body[i] == quote) {
          closed = true;
          ++i;
          break;
        }
        value += body[i++];
      }
      if (!closed) throw Error(ErrorCode::kUnbalancedList, "objects list: unterminated string");
      current += value;
      have_item = true;
      continue;
    }
    if (c == '[' || c == ']') throw Error(ErrorCode::kUnbalancedList, "objects list: nested or stray bracket");
    if (c == ',') {
      flush();
      ++i;
      continue;
    }
    current += c;
    ++i;
  }
  flush();
  // A trailing comma leaves an empty final item; drop empties.
  items.erase(std::remove_if(items.begin(), items.end(), [](const std::string& s) { return s.empty(); }),
              items.end());
  return items;
}

}  // namespace

std::string normalize_object_name(std::string_view name) {
  std::string s = lower(trim(name));
  // Collapse internal whitespace.
  std::string collapsed;
  bool space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = true;
      continue;
    }
    if (space && !collapsed.empty()) collapsed += ' ';
    space = false;
    collapsed += c;
  }
  if (collapsed.empty()) return {};
  const size_t last_space = collapsed.rfind(' ');
  const std::string head = last_space == std::string::npos ? collapsed : collapsed.substr(last_space + 1);
  const std::string singular = singularize(head);
  std::string result = last_space == std::string::npos ? singular : collapsed.substr(0, last_space + 1) + singular;
  if (meta_terms().count(result) || (meta_terms().count(singular) && last_space == std::string::npos)) return {};
  return result;
}

CaptionResult parse_caption_response(std::string_view text) {
  const size_t cap = find_marker(text, "caption:");
  if (cap == std::string_view::npos) throw Error(ErrorCode::kMissingCaption, "caption response: missing 'Caption:' marker");
  const size_t obj = find_marker(text, "objects:", cap);
  if (obj == std::string_view::npos) throw Error(ErrorCode::kMissingObjects, "caption response: missing 'Objects:' marker");

  CaptionResult result;
  result.caption = trim(text.substr(cap + 8, obj - cap - 8));

  const std::string rest = trim(text.substr(obj + 8));
  if (rest.empty() || rest.front() != '[') {
    throw Error(ErrorCode::kUnbalancedList, "caption response: objects list must start with '['");
  }
  // Find the matching close bracket outside quotes.
  size_t close = std::string::npos;
  char quote = 0;
  for (size_t i = 1; i < rest.size(); ++i) {
    const char c = rest[i];
    if (quote) {
      if (c == '\\') {
        ++i;
      } else if (c == quote) {
        quote = 0;
      }
      continue;
    }
    if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == ']') {
      close = i;
      break;
    } else if (c == '[') {
      throw Error(ErrorCode::kUnbalancedList, "caption response: nested list");
    }
  }
  if (close == std::string::npos) throw Error(ErrorCode::kUnbalancedList, "caption response: unterminated objects list");

  for (const auto& raw : split_list_items(std::string_view(rest).substr(1, close - 1))) {
    std::string name = normalize_object_name(raw);
    if (!name.empty()) result.objects.push_back(std::move(name));
  }
  return result;
}

OrientationResult parse_orientation_response(std::string_view text) {
  std::string body = trim(text);
  // Strip a markdown fence if the model added one anyway.
  if (body.rfind("```", 0) == 0) {
    const size_t first_nl = body.find('\n');
    const size_t last = body.rfind("```");
    if (first_nl != std::string::npos && last > first_nl) body = trim(body.substr(first_nl + 1, last - first_nl - 1));
  }
  Json j = Json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::kInvalidJson, "orientation response: not a JSON object");
  for (const char* key : {"description", "facing"}) {
    if (!j.contains(key)) throw Error(ErrorCode::kMissingKey, std::string("orientation response: missing key '") + key + "'");
    if (!j[key].is_string()) throw Error(ErrorCode::kInvalidJson, std::string("orientation response: '") + key + "' must be a string");
  }
  OrientationResult r;
  r.description = trim(j["description"].get<std::string>());
  r.facing = parse_facing_label(lower(trim(j["facing"].get<std::string>())));
  return r;
}

RegionCaption clean_region_caption(std::string_view text, int word_limit) {
  std::string s = trim(text);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = trim(s.substr(1, s.size() - 2));
  while (!s.empty() && std::string_view(".,;:!").find(s.back()) != std::string_view::npos) s.pop_back();
  s = trim(s);
  if (s.empty()) throw Error(ErrorCode::kEmptyCaption, "region caption is empty");

  RegionCaption out;
  std::vector<std::string> words;
  size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) words.emplace_back(s.substr(start, i - start));
  }
  if (word_limit > 0 && static_cast<int>(words.size()) > word_limit) {
    out.warning = "region caption has " + std::to_string(words.size()) + " words (limit " +
                  std::to_string(word_limit) + ")";
    out.truncated = true;
    words.resize(static_cast<size_t>(word_limit));
  }
  for (size_t k = 0; k < words.size(); ++k) {
    if (k) out.caption += ' ';
    out.caption += words[k];
  }
  while (!out.caption.empty() && std::string_view(".,;:!").find(out.caption.back()) != std::string_view::npos) {
    out.caption.pop_back();
  }
  return out;
}

}  // namespace forge
