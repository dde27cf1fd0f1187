#include "cuem/text.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_set>

namespace cuem {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

const std::unordered_set<std::string>& stopwords() {
    static const std::unordered_set<std::string> words = {
        "a",    "an",   "and",  "are",  "as",    "at",   "be",   "but", "by",   "for",
        "from", "has",  "have", "he",   "her",   "his",  "i",    "in",  "is",   "it",
        "its",  "me",   "my",   "no",   "not",   "of",   "on",   "or",  "she",  "so",
        "that", "the",  "them", "then", "there", "they", "this", "to",  "was",  "we",
        "were", "what", "when", "where","which", "who",  "will", "with","you",  "your",
    };
    return words;
}

}  // namespace

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_ws = true;
    for (char c : s) {
        if (is_space(c)) {
            in_ws = true;
            continue;
        }
        if (in_ws && !out.empty()) out.push_back(' ');
        in_ws = false;
        out.push_back(c);
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : s) {
        if (is_alnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

std::set<std::string> token_set(std::string_view s) {
    auto tokens = tokenize(s);
    return std::set<std::string>(tokens.begin(), tokens.end());
}

std::vector<std::string> split_whitespace(std::string_view s) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
        if (is_space(c)) {
            if (!cur.empty()) {
                parts.push_back(std::move(cur));
                cur.clear();
            }
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) parts.push_back(std::move(cur));
    return parts;
}

std::vector<std::string> split_lines(std::string_view s) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : s) {
        if (c == '\n') {
            lines.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    lines.push_back(std::move(cur));
    return lines;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) out.append(sep);
        out.append(parts[i]);
    }
    return out;
}

bool contains_ci(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return true;
    return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

bool is_stopword(std::string_view token) {
    return stopwords().count(std::string(token)) > 0;
}

std::string truncate_at_word(std::string_view s, std::size_t max_chars) {
    if (s.size() <= max_chars) return trim(s);
    std::string_view head = s.substr(0, max_chars);
    std::size_t cut = head.find_last_of(" \t\n\r");
    if (cut == std::string_view::npos) return trim(head);
    return trim(head.substr(0, cut));
}

}  // namespace cuem
