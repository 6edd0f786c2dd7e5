// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace objstyle {

/// Base for every error raised by the library. Callers that only need a
/// message can catch this; the CLI maps the concrete types to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition (empty text, NaN pixels, ...).
class RejectedInputError : public Error {
public:
    using Error::Error;
};

/// Input is well-formed but mathematically degenerate (zero-norm vectors,
/// all-zero masks, empty candidate sets).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

class BackendLoadError : public Error {
public:
    using Error::Error;
};

/// Region grounding produced an empty foreground for the source text.
class GroundingFailure : public Error {
public:
    explicit GroundingFailure(const std::string& source_text)
        : Error("no region grounded for '" + source_text + "'"), source_text_(source_text) {}

    const std::string& source_text() const noexcept { return source_text_; }

private:
    std::string source_text_;
};

/// A loss term became non-finite. Carries the path of the last good
/// checkpoint when the trainer managed to write one.
class TrainingDivergence : public Error {
public:
    explicit TrainingDivergence(const std::string& what, std::string last_good_checkpoint = {})
        : Error(what), checkpoint_(std::move(last_good_checkpoint)) {}

    const std::string& last_good_checkpoint() const noexcept { return checkpoint_; }

private:
    std::string checkpoint_;
};

}  // namespace objstyle
