#ifndef PSL_H
#define PSL_H

#ifdef __cplusplus
extern "C" {
#endif

/* Opaque compilation/execution session. */
typedef struct psl_session psl_session;

typedef enum {
    PSL_OK = 0,
    PSL_ERR_RUNTIME = 1, /* program faulted */
    PSL_ERR_CHECK = 2,   /* diagnostics reported */
    PSL_ERR_USAGE = 3,   /* bad arguments */
    PSL_ERR_IO = 4       /* file not readable */
} psl_status;

typedef struct {
    int sequential;              /* nonzero: one server, deterministic */
    int servers;                 /* 0: hardware parallelism */
    unsigned long long seed;     /* steal-victim RNG seed */
    int stats;                   /* emit scheduler/store stats on stderr */
    int debug_sync;              /* concurrent-object event log */
    int lock_timeout_ms;         /* 0: wait forever */
} psl_run_options;

void psl_default_options(psl_run_options* opts);

psl_session* psl_session_new(void);
void psl_session_free(psl_session* s);

psl_status psl_load_file(psl_session* s, const char* path);
psl_status psl_load_text(psl_session* s, const char* text, const char* filename);

/* Parse + desugar + analyze everything loaded. */
psl_status psl_check(psl_session* s);

/* Diagnostics, one per line. Valid until the next call on the session. */
const char* psl_diagnostics(psl_session* s);

/* Pretty-printed trees; stage is "ast" or "desugar". */
const char* psl_dump(psl_session* s, const char* stage);

/* Run the entry function (null: "main"), capturing output. */
psl_status psl_run(psl_session* s, const psl_run_options* opts, const char* entry);
const char* psl_stdout(psl_session* s);
const char* psl_stderr(psl_session* s);

/* Run with output wired to the process stdout/stderr. */
psl_status psl_run_stdio(psl_session* s, const psl_run_options* opts,
                         const char* entry);

/* Interactive loop on stdin/stdout/stderr. */
psl_status psl_repl_stdio(psl_session* s, const psl_run_options* opts);

#ifdef __cplusplus
}
#endif

#endif /* PSL_H */
