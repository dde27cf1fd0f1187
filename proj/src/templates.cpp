#include "cuem/templates.hpp"

#include <fstream>
#include <sstream>

namespace cuem {

Result<std::string> render_template(const std::string& tpl,
                                    const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tpl.size());
    std::size_t i = 0;
    while (i < tpl.size()) {
        const char c = tpl[i];
        if (c == '{') {
            if (i + 1 < tpl.size() && tpl[i + 1] == '{') {
                out.push_back('{');
                i += 2;
                continue;
            }
            const std::size_t close = tpl.find('}', i + 1);
            if (close == std::string::npos) {
                return make_error<std::string>(Errc::parse_error,
                                               "unterminated placeholder at offset " +
                                                   std::to_string(i));
            }
            const std::string name = tpl.substr(i + 1, close - i - 1);
            if (name.find('{') != std::string::npos) {
                return make_error<std::string>(Errc::parse_error,
                                               "nested '{' inside placeholder at offset " +
                                                   std::to_string(i));
            }
            auto it = values.find(name);
            if (it == values.end()) {
                return make_error<std::string>(Errc::invalid_argument,
                                               "unbound placeholder '" + name + "'");
            }
            out += it->second;
            i = close + 1;
            continue;
        }
        if (c == '}' && i + 1 < tpl.size() && tpl[i + 1] == '}') {
            out.push_back('}');
            i += 2;
            continue;
        }
        out.push_back(c);
        ++i;
    }
    return out;
}

TemplateSet TemplateSet::builtin() {
    TemplateSet t;

    t.refiner =
        "{few shots}\n"
        "\n"
        "Conversation so far:\n"
        "{previous_chat}\n"
        "\n"
        "User question: {user_question}\n"
        "Image caption: {image_caption}\n"
        "Retrieved document summaries:\n"
        "{docummnt_summaries}\n"
        "\n"
        "Rewrite the request above as one clear intention. Be concise, and always end with\n"
        "'{directive_sentinel} <search query> ~'.\n";

    t.query_generator =
        "{system_prompt}\n"
        "\n"
        "Conversation so far:\n"
        "{previous_chat}\n"
        "\n"
        "Refined intention:\n"
        "{refined_information}\n"
        "\n"
        "Retrieved document summaries:\n"
        "{docummnt_summaries}\n"
        "\n"
        "Decide whether more evidence is needed. Do not generate a query if the summaries\n"
        "already cover the intention; in that case output nothing. Otherwise output at\n"
        "least 1 and at most 3 lines, each of the form 'QUERY: <search query>'.\n";

    t.api_finder =
        "{system_prompt}\n"
        "\n"
        "API under consideration:\n"
        "{api_description}\n"
        "\n"
        "Example calls:\n"
        "{api_examples}\n"
        "\n"
        "Conversation so far:\n"
        "{previous_chat}\n"
        "\n"
        "User query: {usre_query}\n"
        "Refined intention: {refined_information}\n"
        "\n"
        "Does answering require this API? Complete the JSON.\n"
        "<|assistant|>{{\"need_api\":";

    t.safety_detector =
        "{system_prompt}\n"
        "\n"
        "Service categories in scope:\n"
        "{api_description}\n"
        "\n"
        "{few_shots}\n"
        "\n"
        "Conversation so far:\n"
        "{chat_history}\n"
        "\n"
        "Refined intention:\n"
        "{refined_information}\n"
        "\n"
        "Is this a safe question to answer? Complete the JSON.\n"
        "<|assistant|>{{\"safe_question\":";

    t.answer =
        "{system_prompt}\n"
        "{safety_prompt}\n"
        "\n"
        "Conversation so far:\n"
        "{previous_chat}\n"
        "\n"
        "User question: {user_question}\n"
        "\n"
        "Search results:\n"
        "{docummnt_summaries}\n"
        "\n"
        "Answer the user question using only the search results above. Cite the documents\n"
        "you used inline as [doc:<id>].\n";

    return t;
}

Result<std::string> read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        return make_error<std::string>(Errc::io_error, "cannot open file: " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

Result<void> write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        return make_error<void>(Errc::io_error, "cannot write file: " + path);
    }
    out << content;
    if (!out.good()) {
        return make_error<void>(Errc::io_error, "write failed: " + path);
    }
    return {};
}

Result<TemplateSet> TemplateSet::load(const std::string& dir) {
    TemplateSet t;
    struct Slot {
        const char* file;
        std::string* target;
    };
    Slot slots[] = {
        {"refiner.txt", &t.refiner},
        {"query_generator.txt", &t.query_generator},
        {"api_finder.txt", &t.api_finder},
        {"safety_detector.txt", &t.safety_detector},
        {"answer.txt", &t.answer},
    };
    for (const auto& slot : slots) {
        auto content = read_text_file(dir + "/" + slot.file);
        if (!content.ok()) return content.error();
        *slot.target = content.take();
    }
    return t;
}

std::string render_history(const std::vector<ChatTurn>& history) {
    if (history.empty()) return "(none)";
    std::string out;
    for (const auto& turn : history) {
        out += (turn.role == Role::user ? "user: " : "assistant: ");
        out += turn.utterance;
        out += '\n';
    }
    out.pop_back();
    return out;
}

std::string render_summaries(const std::vector<std::pair<std::string, std::string>>& summaries) {
    if (summaries.empty()) return "(none)";
    std::string out;
    for (const auto& [id, summary] : summaries) {
        out += "- [doc:" + id + "] " + summary + "\n";
    }
    out.pop_back();
    return out;
}

}  // namespace cuem
