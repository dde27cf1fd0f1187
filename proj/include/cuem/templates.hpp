#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cuem/result.hpp"
#include "cuem/types.hpp"

namespace cuem {

// ---------------------------------------------------------------------------
// Prompt template engine. Placeholders are {name} (names may contain spaces);
// {{ and }} emit literal braces so templates can force JSON prefixes like
// {"need_api":. Rendering fails on any placeholder without a binding.
// ---------------------------------------------------------------------------

Result<std::string> render_template(const std::string& tpl,
                                    const std::map<std::string, std::string>& values);

/// The five pipeline prompts. Loadable from versioned text files; builtin()
/// returns the compiled-in defaults the shipped template files mirror.
struct TemplateSet {
    std::string refiner;
    std::string query_generator;
    std::string api_finder;
    std::string safety_detector;
    std::string answer;

    static TemplateSet builtin();
    /// Loads refiner.txt, query_generator.txt, api_finder.txt,
    /// safety_detector.txt, answer.txt from a directory.
    static Result<TemplateSet> load(const std::string& dir);
};

Result<std::string> read_text_file(const std::string& path);
Result<void> write_text_file(const std::string& path, const std::string& content);

/// "user: ..." / "assistant: ..." lines; "(none)" for an empty history.
std::string render_history(const std::vector<ChatTurn>& history);

/// "- [doc:<id>] <summary>" lines; "(none)" when empty.
std::string render_summaries(const std::vector<std::pair<std::string, std::string>>& summaries);

}  // namespace cuem
