#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace dmd {

/// Root of every error raised by the library. Callers that only need to
/// report a message can catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Violated call precondition (empty message list, k == 0, ...).
class PreconditionError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// ---- dataset ---------------------------------------------------------------

class MalformedRecord : public Error {
public:
    MalformedRecord(std::size_t line_no, const std::string& reason)
        : Error("malformed record at line " + std::to_string(line_no) + ": " + reason),
          line_no_(line_no) {}
    std::size_t line_no() const noexcept { return line_no_; }

private:
    std::size_t line_no_;
};

class IndexOutOfRange : public Error {
public:
    IndexOutOfRange(std::size_t line_no, std::size_t index, std::size_t words)
        : Error("target_index " + std::to_string(index) + " out of range for " +
                std::to_string(words) + " words (line " + std::to_string(line_no) + ")"),
          line_no_(line_no), index_(index), words_(words) {}
    std::size_t line_no() const noexcept { return line_no_; }
    std::size_t index() const noexcept { return index_; }
    std::size_t words() const noexcept { return words_; }

private:
    std::size_t line_no_;
    std::size_t index_;
    std::size_t words_;
};

class DuplicateId : public Error {
public:
    explicit DuplicateId(const std::string& id) : Error("duplicate sample id: " + id), id_(id) {}
    const std::string& id() const noexcept { return id_; }

private:
    std::string id_;
};

class UnlabeledSample : public Error {
public:
    explicit UnlabeledSample(const std::string& id) : Error("sample has no label: " + id) {}
};

class InsufficientClass : public Error {
public:
    InsufficientClass(const std::string& label, std::size_t have, std::size_t need)
        : Error("insufficient samples for class " + label + ": have " + std::to_string(have) +
                ", need " + std::to_string(need)),
          label_(label), have_(have), need_(need) {}
    const std::string& label() const noexcept { return label_; }
    std::size_t have() const noexcept { return have_; }
    std::size_t need() const noexcept { return need_; }

private:
    std::string label_;
    std::size_t have_;
    std::size_t need_;
};

// ---- numerics / files ------------------------------------------------------

class DimMismatch : public Error {
public:
    DimMismatch(std::size_t expected, std::size_t got)
        : Error("dimension mismatch: expected " + std::to_string(expected) + ", got " +
                std::to_string(got)),
          expected_(expected), got_(got) {}
    std::size_t expected() const noexcept { return expected_; }
    std::size_t got() const noexcept { return got_; }

private:
    std::size_t expected_;
    std::size_t got_;
};

class FormatError : public Error {
public:
    FormatError(std::uint64_t offset, const std::string& reason)
        : Error("format error at offset " + std::to_string(offset) + ": " + reason),
          offset_(offset) {}
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

/// A well-formed header with a version this build cannot read.
class VersionError : public FormatError {
public:
    VersionError(std::uint32_t found, std::uint32_t supported)
        : FormatError(4, "unsupported container version " + std::to_string(found) + " (supported: " +
                             std::to_string(supported) + ")"),
          found_(found) {}
    std::uint32_t found() const noexcept { return found_; }

private:
    std::uint32_t found_;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class MissingEmbedding : public Error {
public:
    explicit MissingEmbedding(const std::string& id)
        : Error("no embedding available for sample id: " + id), id_(id) {}
    const std::string& id() const noexcept { return id_; }

private:
    std::string id_;
};

class TemplateError : public Error {
public:
    explicit TemplateError(const std::string& placeholder)
        : Error("template error: placeholder {{" + placeholder + "}}"), placeholder_(placeholder) {}
    TemplateError(const std::string& placeholder, const std::string& reason)
        : Error("template error: placeholder {{" + placeholder + "}}: " + reason),
          placeholder_(placeholder) {}
    const std::string& placeholder() const noexcept { return placeholder_; }

private:
    std::string placeholder_;
};

// ---- LLM backend -----------------------------------------------------------

/// Anything that went wrong talking to a model backend. The CLI maps these
/// to exit status 3.
class BackendError : public Error {
public:
    using Error::Error;
};

class TransportError : public BackendError {
public:
    using BackendError::BackendError;
};

class ApiError : public BackendError {
public:
    ApiError(int status, std::string body)
        : BackendError("API error " + std::to_string(status) + ": " + body),
          status_(status), body_(std::move(body)) {}
    int status() const noexcept { return status_; }
    const std::string& body() const noexcept { return body_; }
    bool retryable() const noexcept { return status_ == 429 || status_ >= 500; }

private:
    int status_;
    std::string body_;
};

class TimeoutError : public BackendError {
public:
    using BackendError::BackendError;
};

class ScriptExhausted : public BackendError {
public:
    ScriptExhausted() : BackendError("mock script exhausted") {}
};

// ---- explicit guidance -----------------------------------------------------

class ProviderUnavailable : public Error {
public:
    using Error::Error;
};

class MalformedThoughts : public Error {
public:
    using Error::Error;
};

// ---- eval / cli ------------------------------------------------------------

class EmptyEvaluation : public Error {
public:
    EmptyEvaluation() : Error("cannot compute metrics over zero samples") {}
};

class AmbiguousTarget : public Error {
public:
    AmbiguousTarget(const std::string& word, std::size_t occurrences)
        : Error("target word '" + word + "' occurs " + std::to_string(occurrences) +
                " times; pass an explicit index") {}
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace dmd
