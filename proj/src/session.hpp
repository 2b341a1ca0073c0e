#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "diag.hpp"
#include "exec.hpp"
#include "sema.hpp"

namespace psl {

// Snapshot of the last completed run, for --stats and the REPL :stats.
struct RunReport {
    int64_t spawned = 0;
    int64_t steals = 0;
    int64_t executed = 0;
    int64_t discarded = 0;
    int64_t max_active = 0;
    int servers = 1;
    int64_t live_at_exit = 0;
    int64_t peak_live = 0;
    bool valid = false;
};

// One compilation pipeline: sources in, diagnostics or a runnable
// program out. The REPL keeps a session alive across lines.
class Session {
public:
    bool load_file(const std::string& path, std::string& io_error);
    void load_text(std::string text, std::string filename);

    // Parse, desugar and analyze everything loaded; false on any error.
    bool check();
    DiagSink& diags() { return diags_; }
    std::string render_diags() const;

    // Pretty-print the parsed ("ast") or desugared ("desugar") trees.
    std::string dump(const std::string& stage, DiagSink& d);

    // Execute the entry function; 0 ok, 1 runtime fault, 2 check errors.
    int run(const RunOptions& opts, std::ostream& out, std::ostream& err,
            const std::string& entry = "main");

    // Interactive loop; returns an exit code.
    int repl(std::istream& in, std::ostream& out, std::ostream& err,
             const RunOptions& opts);

    const RunReport& last_report() const { return report_; }
    Program* program() { return prog_.get(); }

private:
    int eval_repl_line(const std::string& line, const RunOptions& opts,
                       std::ostream& out, std::ostream& err);

    std::vector<std::pair<std::string, std::string>> sources_;  // filename, text
    std::unique_ptr<Program> prog_;
    DiagSink diags_;
    bool checked_ = false;
    RunReport report_;
    std::vector<std::string> repl_lines_;  // replayed to keep session state
};

void emit_stats(const RunReport& r, std::ostream& err);
std::string render_fault(const Fault& f);

}  // namespace psl
