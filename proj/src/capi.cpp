#include "../include/psl.h"

#include <iostream>
#include <sstream>
#include <string>

#include "session.hpp"

struct psl_session {
    psl::Session s;
    std::string diag_buf;
    std::string dump_buf;
    std::string out_buf;
    std::string err_buf;
};

extern "C" {

void psl_default_options(psl_run_options* opts) {
    if (!opts) return;
    opts->sequential = 0;
    opts->servers = 0;
    opts->seed = 0;
    opts->stats = 0;
    opts->debug_sync = 0;
    opts->lock_timeout_ms = 0;
}

psl_session* psl_session_new(void) { return new psl_session(); }

void psl_session_free(psl_session* s) { delete s; }

psl_status psl_load_file(psl_session* s, const char* path) {
    if (!s || !path) return PSL_ERR_USAGE;
    std::string io_error;
    return s->s.load_file(path, io_error) ? PSL_OK : PSL_ERR_IO;
}

psl_status psl_load_text(psl_session* s, const char* text, const char* filename) {
    if (!s || !text) return PSL_ERR_USAGE;
    s->s.load_text(text, filename ? filename : "<input>");
    return PSL_OK;
}

psl_status psl_check(psl_session* s) {
    if (!s) return PSL_ERR_USAGE;
    bool ok = s->s.check();
    s->diag_buf = s->s.render_diags();
    return ok ? PSL_OK : PSL_ERR_CHECK;
}

const char* psl_diagnostics(psl_session* s) {
    if (!s) return "";
    s->diag_buf = s->s.render_diags();
    return s->diag_buf.c_str();
}

const char* psl_dump(psl_session* s, const char* stage) {
    if (!s || !stage) return "";
    psl::DiagSink d;
    s->dump_buf = s->s.dump(stage, d);
    return s->dump_buf.c_str();
}

static psl::RunOptions to_run_options(const psl_run_options* opts) {
    psl::RunOptions r;
    if (opts) {
        r.sequential = opts->sequential != 0;
        r.servers = opts->servers;
        r.seed = opts->seed;
        r.stats = opts->stats != 0;
        r.debug_sync = opts->debug_sync != 0;
        r.lock_timeout_ms = opts->lock_timeout_ms;
    }
    return r;
}

psl_status psl_run(psl_session* s, const psl_run_options* opts, const char* entry) {
    if (!s) return PSL_ERR_USAGE;
    std::ostringstream out, err;
    int rc = s->s.run(to_run_options(opts), out, err, entry ? entry : "main");
    s->out_buf = out.str();
    s->err_buf = err.str();
    return static_cast<psl_status>(rc);
}

const char* psl_stdout(psl_session* s) { return s ? s->out_buf.c_str() : ""; }
const char* psl_stderr(psl_session* s) { return s ? s->err_buf.c_str() : ""; }

psl_status psl_run_stdio(psl_session* s, const psl_run_options* opts,
                         const char* entry) {
    if (!s) return PSL_ERR_USAGE;
    int rc = s->s.run(to_run_options(opts), std::cout, std::cerr,
                      entry ? entry : "main");
    std::cout.flush();
    std::cerr.flush();
    return static_cast<psl_status>(rc);
}

psl_status psl_repl_stdio(psl_session* s, const psl_run_options* opts) {
    if (!s) return PSL_ERR_USAGE;
    int rc = s->s.repl(std::cin, std::cout, std::cerr, to_run_options(opts));
    return static_cast<psl_status>(rc);
}

}  // extern "C"
