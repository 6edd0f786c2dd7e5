// SPDX-License-Identifier: Apache-2.0
#include "objstyle/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <unordered_set>

#include "objstyle/embedding.hpp"
#include "objstyle/error.hpp"

namespace objstyle {

namespace {

const std::unordered_set<std::string_view>& modifier_lexicon() {
    static const std::unordered_set<std::string_view> words = {
        // determiners, quantifiers, possessives
        "a", "an", "the", "this", "that", "these", "those", "my", "your", "his", "her", "its", "our", "their",
        "some", "any", "each", "every", "one", "two", "three", "many", "several", "few",
        // colours
        "red", "green", "blue", "yellow", "orange", "purple", "violet", "pink", "brown", "black", "white",
        "gray", "grey", "golden", "beige", "cyan", "magenta", "crimson", "navy", "teal",
        "turquoise", "maroon", "colorful", "colourful", "dark", "pale", "bright",
        // materials used attributively
        "wooden", "metallic", "woolen", "frosted", "stained", "plastic", "ceramic",
        // size, age, shape, quality
        "big", "small", "large", "little", "tiny", "huge", "giant", "tall", "short", "long", "wide", "narrow",
        "old", "new", "young", "ancient", "modern", "flat", "thick", "thin", "fat",
        "shiny", "wet", "dry", "fresh", "ripe", "rotten", "broken", "striped", "spotted", "fluffy", "furry",
        "beautiful", "pretty", "ugly", "cute", "vintage", "classic", "fancy", "plain", "sliced", "baked",
        "open", "closed", "empty", "full", "hot", "cold", "sweet", "snowy", "rainy", "sunny", "starry",
    };
    return words;
}

const std::unordered_set<std::string_view>& phrase_breaks() {
    static const std::unordered_set<std::string_view> words = {
        "of", "by", "with", "in", "on", "at", "from", "for", "that", "which", "who", "under", "over",
        "near", "behind", "beside", "and", "or", "like", "without", "inside", "into", "onto",
    };
    return words;
}

std::string strip_punct(std::string s) {
    auto keep = [](unsigned char c) { return std::isalnum(c) || c >= 0x80; };
    while (!s.empty() && !keep(static_cast<unsigned char>(s.back()))) s.pop_back();
    size_t i = 0;
    while (i < s.size() && !keep(static_cast<unsigned char>(s[i]))) ++i;
    return s.substr(i);
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out.push_back(c);
    }
    return out + "'";
}

}  // namespace

bool RuleBasedParser::is_modifier(std::string_view token) {
    if (modifier_lexicon().contains(token)) return true;
    return !token.empty() && std::all_of(token.begin(), token.end(), [](char c) {
        return std::isdigit(static_cast<unsigned char>(c)) != 0;
    });
}

bool RuleBasedParser::is_phrase_break(std::string_view token) { return phrase_breaks().contains(token); }

std::optional<size_t> RuleBasedParser::head_index(const std::vector<std::string>& tokens) const {
    size_t end = tokens.size();
    // A break word at position 0 ("of", "by" ...) cannot close a phrase.
    for (size_t i = 1; i < tokens.size(); ++i) {
        if (is_phrase_break(tokens[i])) {
            end = i;
            break;
        }
    }
    for (size_t i = end; i-- > 0;) {
        if (!is_modifier(strip_punct(tokens[i]))) return i;
    }
    return std::nullopt;
}

std::optional<size_t> CommandParser::head_index(const std::vector<std::string>& tokens) const {
    std::string phrase;
    for (const auto& t : tokens) phrase += (phrase.empty() ? "" : " ") + t;
    const std::string cmd = command_ + " " + shell_quote(phrase) + " 2>/dev/null";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (pipe == nullptr) return std::nullopt;
    std::string output;
    std::array<char, 256> buf{};
    while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe) != nullptr) output += buf.data();
    const int status = ::pclose(pipe);
    if (status != 0) return std::nullopt;
    std::istringstream ss(output);
    std::string line;
    std::getline(ss, line);
    const auto word = normalize_text(line);
    for (size_t i = tokens.size(); i-- > 0;) {
        if (strip_punct(tokens[i]) == word) return i;
    }
    return std::nullopt;
}

const HeadNounParser& default_parser() {
    static const RuleBasedParser parser;
    return parser;
}

std::unique_ptr<HeadNounParser> make_parser(const std::string& kind, const std::string& command) {
    if (kind == "rule") return std::make_unique<RuleBasedParser>();
    if (kind == "command") {
        if (command.empty()) throw ConfigError("parser 'command' needs text.parser_command");
        return std::make_unique<CommandParser>(command);
    }
    throw ConfigError("unknown text parser '" + kind + "'");
}

std::vector<std::string> tokenize_phrase(std::string_view text) {
    std::vector<std::string> tokens;
    std::istringstream ss(normalize_text(text));
    std::string tok;
    while (ss >> tok) tokens.push_back(tok);
    return tokens;
}

std::string central_word(std::string_view text, const HeadNounParser& parser) {
    const auto tokens = tokenize_phrase(text);
    if (tokens.empty()) throw RejectedInputError("central_word: empty text");
    if (tokens.size() == 1) return strip_punct(tokens.front()).empty() ? tokens.front() : strip_punct(tokens.front());
    if (auto idx = parser.head_index(tokens)) return strip_punct(tokens[*idx]);
    std::clog << "warning: no head noun found in '" << normalize_text(text) << "' (" << parser.name()
              << " parser); using last token\n";
    return strip_punct(tokens.back());
}

TextTriple compose_target(std::string_view source, std::string_view style, const HeadNounParser& parser) {
    const auto style_norm = normalize_text(style);
    if (style_norm.empty()) throw RejectedInputError("compose_target: empty style text");
    TextTriple t;
    t.source = normalize_text(source);
    t.style = style_norm;
    t.target = style_norm + " " + central_word(source, parser);
    return t;
}

}  // namespace objstyle
