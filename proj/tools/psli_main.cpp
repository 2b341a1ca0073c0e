#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include "psl.h"

namespace {

int usage() {
    std::fprintf(stderr,
                 "usage: psli <command> [flags] <files...>\n"
                 "commands:\n"
                 "  run    execute main() of the given files\n"
                 "  check  analyze only; print diagnostics\n"
                 "  dump   print a tree: --dump desugar|ast (default desugar)\n"
                 "  repl   interactive session\n"
                 "  bench  time `run` over --runs N repetitions (default 3)\n"
                 "flags: --seq --servers N --seed S --stats --dump desugar|ast\n"
                 "       --debug-sync --lock-timeout-ms N --entry NAME --runs N\n");
    return 3;
}

struct Cli {
    std::string cmd;
    std::vector<std::string> files;
    psl_run_options opts{};
    std::string stage = "desugar";
    std::string entry = "main";
    int runs = 3;
};

bool parse_args(int argc, char** argv, Cli& cli) {
    if (argc < 2) return false;
    cli.cmd = argv[1];
    psl_default_options(&cli.opts);
    for (int i = 2; i < argc; ++i) {
        std::string a = argv[i];
        auto next = [&](long long& out) {
            if (i + 1 >= argc) return false;
            out = std::atoll(argv[++i]);
            return true;
        };
        long long n = 0;
        if (a == "--seq") {
            cli.opts.sequential = 1;
        } else if (a == "--servers") {
            if (!next(n)) return false;
            cli.opts.servers = static_cast<int>(n);
        } else if (a == "--seed") {
            if (!next(n)) return false;
            cli.opts.seed = static_cast<unsigned long long>(n);
        } else if (a == "--stats") {
            cli.opts.stats = 1;
        } else if (a == "--debug-sync") {
            cli.opts.debug_sync = 1;
        } else if (a == "--lock-timeout-ms") {
            if (!next(n)) return false;
            cli.opts.lock_timeout_ms = static_cast<int>(n);
        } else if (a == "--dump") {
            if (i + 1 >= argc) return false;
            cli.stage = argv[++i];
        } else if (a == "--entry") {
            if (i + 1 >= argc) return false;
            cli.entry = argv[++i];
        } else if (a == "--runs") {
            if (!next(n)) return false;
            cli.runs = static_cast<int>(n);
        } else if (a == "desugar" || a == "ast") {
            cli.stage = a;  // `psli dump ast file` shorthand
        } else if (!a.empty() && a[0] == '-') {
            return false;
        } else {
            cli.files.push_back(a);
        }
    }
    return true;
}

int load_all(psl_session* s, const Cli& cli) {
    for (const auto& f : cli.files) {
        if (psl_load_file(s, f.c_str()) != PSL_OK) {
            std::fprintf(stderr, "error: cannot open '%s'\n", f.c_str());
            return 3;
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    Cli cli;
    if (!parse_args(argc, argv, cli)) return usage();
    if (cli.stage != "desugar" && cli.stage != "ast") return usage();

    psl_session* s = psl_session_new();
    int rc = 0;
    if (cli.cmd == "run") {
        if (cli.files.empty()) rc = usage();
        if (!rc) rc = load_all(s, cli);
        if (!rc) rc = static_cast<int>(psl_run_stdio(s, &cli.opts, cli.entry.c_str()));
    } else if (cli.cmd == "check") {
        rc = load_all(s, cli);
        if (!rc) {
            rc = static_cast<int>(psl_check(s));
            std::fputs(psl_diagnostics(s), stderr);
        }
    } else if (cli.cmd == "dump") {
        if (cli.files.empty()) rc = usage();
        if (!rc) rc = load_all(s, cli);
        if (!rc) std::fputs(psl_dump(s, cli.stage.c_str()), stdout);
    } else if (cli.cmd == "repl") {
        rc = load_all(s, cli);
        if (!rc) rc = static_cast<int>(psl_repl_stdio(s, &cli.opts));
    } else if (cli.cmd == "bench") {
        if (cli.files.empty() || cli.runs < 1) rc = usage();
        if (!rc) rc = load_all(s, cli);
        if (!rc) {
            double total = 0;
            for (int k = 0; k < cli.runs && !rc; ++k) {
                auto t0 = std::chrono::steady_clock::now();
                rc = static_cast<int>(psl_run(s, &cli.opts, cli.entry.c_str()));
                auto t1 = std::chrono::steady_clock::now();
                total += std::chrono::duration<double>(t1 - t0).count();
                if (rc) std::fputs(psl_stderr(s), stderr);
            }
            if (!rc)
                std::printf("runs=%d mean_seconds=%.3f\n", cli.runs, total / cli.runs);
        }
    } else {
        rc = usage();
    }
    psl_session_free(s);
    return rc;
}
