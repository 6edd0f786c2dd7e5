// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace objstyle {

/// Finds the syntactic head of a short noun phrase.
class HeadNounParser {
public:
    virtual ~HeadNounParser() = default;
    virtual std::string name() const = 0;
    /// Index into `tokens` (already normalized) of the head noun, or nullopt
    /// when no noun could be identified.
    virtual std::optional<size_t> head_index(const std::vector<std::string>& tokens) const = 0;
};

/// Hermetic fallback: the phrase is cut at its first preposition or
/// conjunction, and the head is the rightmost remaining token that is not a
/// determiner, number or known adjective/colour/material modifier.
class RuleBasedParser final : public HeadNounParser {
public:
    std::string name() const override { return "rule"; }
    std::optional<size_t> head_index(const std::vector<std::string>& tokens) const override;

    static bool is_modifier(std::string_view token);
    static bool is_phrase_break(std::string_view token);
};

/// Adapter for an external dependency parser. Runs `command '<phrase>'` and
/// reads the head word from the first line of stdout (tools/spacy_head.py
/// implements this protocol). Falls back to nullopt if the command fails or
/// answers with a word that is not in the phrase.
class CommandParser final : public HeadNounParser {
public:
    explicit CommandParser(std::string command) : command_(std::move(command)) {}
    std::string name() const override { return "command"; }
    std::optional<size_t> head_index(const std::vector<std::string>& tokens) const override;

private:
    std::string command_;
};

const HeadNounParser& default_parser();
/// "rule" or "command" (needs `command`). Throws ConfigError otherwise.
std::unique_ptr<HeadNounParser> make_parser(const std::string& kind, const std::string& command = {});

std::vector<std::string> tokenize_phrase(std::string_view text);

/// Head noun of `text`. A single token is its own head. When the parser finds
/// no noun the last token is returned and a warning is written to std::clog.
/// Throws RejectedInputError for empty text.
std::string central_word(std::string_view text, const HeadNounParser& parser = default_parser());

struct TextTriple {
    std::string source;
    std::string style;
    std::string target;
};

/// target = normalize(style) + " " + central_word(source).
TextTriple compose_target(std::string_view source, std::string_view style,
                          const HeadNounParser& parser = default_parser());

}  // namespace objstyle
