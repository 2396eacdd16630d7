#pragma once

#include <map>
#include <string>
#include <string_view>

namespace forge {

// Provider prompts and the QA template registry, embedded at build time from
// assets/.
std::string_view caption_system_prompt();
std::string_view caption_user_prompt();
std::string_view region_system_prompt();
std::string_view region_user_prompt();
std::string_view orientation_system_prompt();
std::string_view builtin_templates_json();

/// Substitutes {name} placeholders present in `vars`; other braces are left
/// alone. Lines that render to nothing but whitespace are removed, and the
/// result is trimmed.
std::string render_prompt(std::string_view pattern, const std::map<std::string, std::string>& vars);

}  // namespace forge
