#include "forge/prompts.hpp"

#include <sstream>

namespace forge {

std::string render_prompt(std::string_view pattern, const std::map<std::string, std::string>& vars) {
  std::string rendered;
  rendered.reserve(pattern.size());
  for (size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == '{') {
      const size_t close = pattern.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto it = vars.find(std::string(pattern.substr(i + 1, close - i - 1)));
        if (it != vars.end()) {
          rendered += it->second;
          i = close;
          continue;
        }
      }
    }
    rendered += pattern[i];
  }

  std::istringstream lines(rendered);
  std::string line, out;
  while (std::getline(lines, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (!out.empty()) out += '\n';
    out += line;
  }
  return out;
}

}  // namespace forge
