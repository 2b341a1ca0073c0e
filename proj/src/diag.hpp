#pragma once

#include <string>
#include <vector>

#include "span.hpp"

namespace psl {

enum class Severity { Error, Warning };

// Stable diagnostic codes; the negative-test corpus keys off these strings.
struct Diagnostic {
    Severity severity = Severity::Error;
    std::string code;
    std::string message;
    Span span;
    std::string file;

    std::string render() const {
        std::string out = file.empty() ? "<input>" : file;
        out += ":" + std::to_string(span.line) + ":" + std::to_string(span.col) + ": ";
        out += severity == Severity::Error ? "error[" : "warning[";
        out += code + "]: " + message;
        return out;
    }
};

class DiagSink {
public:
    void error(std::string code, std::string msg, Span span, std::string file = {}) {
        diags_.push_back({Severity::Error, std::move(code), std::move(msg), span, std::move(file)});
    }
    void warning(std::string code, std::string msg, Span span, std::string file = {}) {
        diags_.push_back({Severity::Warning, std::move(code), std::move(msg), span, std::move(file)});
    }

    bool has_errors() const {
        for (const auto& d : diags_)
            if (d.severity == Severity::Error) return true;
        return false;
    }
    size_t error_count() const {
        size_t n = 0;
        for (const auto& d : diags_)
            if (d.severity == Severity::Error) ++n;
        return n;
    }

    const std::vector<Diagnostic>& all() const { return diags_; }
    std::vector<Diagnostic>& all() { return diags_; }
    void clear() { diags_.clear(); }

private:
    std::vector<Diagnostic> diags_;
};

// Runtime faults carry a stable code plus the span of the faulting construct.
struct RuntimeFault {
    std::string code;
    std::string message;
    Span span;
};

}  // namespace psl
