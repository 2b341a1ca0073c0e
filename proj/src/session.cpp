#include "session.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "desugar.hpp"
#include "lexer.hpp"
#include "parser.hpp"
#include "pretty.hpp"
#include "sched.hpp"
#include "sync.hpp"

namespace psl {

namespace {

NodePtr parse_one(const std::string& text, const std::string& file, DiagSink& d) {
    auto toks = tokenize(text, d, file);
    return parse_unit(toks, d, file);
}

NodePtr make_name(const std::string& n) {
    auto e = std::make_unique<Node>(NodeKind::Name, Span{});
    e->text = n;
    return e;
}

NodePtr make_call(const std::string& fn, NodePtr arg) {
    auto c = std::make_unique<Node>(NodeKind::CallExpr, Span{});
    c->children.push_back(make_name(fn));
    if (arg) c->children.push_back(std::move(arg));
    return c;
}

NodePtr make_call_stmt(NodePtr call) {
    auto s = std::make_unique<Node>(NodeKind::CallStmt, Span{});
    s->children.push_back(std::move(call));
    return s;
}

bool is_expression_kind(NodeKind k) { return k > NodeKind::ForEach; }

// A line is either a statement or a bare expression; bare expressions
// print their value.
NodePtr parse_repl_line(const std::string& line, DiagSink& d) {
    DiagSink trial;
    auto toks = tokenize(line, trial, "<repl>");
    NodePtr s = parse_statement(toks, trial, "<repl>");
    if (s && !trial.has_errors()) {
        if (is_expression_kind(s->kind) && s->kind != NodeKind::CallExpr)
            s = make_call_stmt(make_call("Println", std::move(s)));
        return s;
    }
    DiagSink trial2;
    auto toks2 = tokenize(line, trial2, "<repl>");
    NodePtr e = parse_expression(toks2, trial2, "<repl>");
    if (e && !trial2.has_errors())
        return make_call_stmt(make_call("Println", std::move(e)));
    for (const auto& dg : trial.all()) d.all().push_back(dg);
    return nullptr;
}

}  // namespace

std::string render_fault(const Fault& f) {
    std::string out = "error[" + f.code + "]: " + f.message;
    if (f.span.line > 0)
        out += " (line " + std::to_string(f.span.line) + ", col " +
               std::to_string(f.span.col) + ")";
    return out;
}

void emit_stats(const RunReport& r, std::ostream& err) {
    err << "picothreads_spawned=" << r.spawned << "\n";
    err << "steals=" << r.steals << "\n";
    err << "max_active=" << r.max_active << "\n";
    err << "servers=" << r.servers << "\n";
    err << "live_objects_at_exit=" << r.live_at_exit << "\n";
    err << "peak_live_objects=" << r.peak_live << "\n";
}

bool Session::load_file(const std::string& path, std::string& io_error) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        io_error = "cannot open '" + path + "'";
        return false;
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    load_text(buf.str(), path);
    return true;
}

void Session::load_text(std::string text, std::string filename) {
    sources_.emplace_back(std::move(filename), std::move(text));
    checked_ = false;
    prog_.reset();
}

bool Session::check() {
    if (checked_) return !diags_.has_errors();
    diags_.clear();
    prog_.reset();
    std::vector<NodePtr> units;
    for (const auto& [file, text] : sources_) {
        NodePtr u = parse_one(text, file, diags_);
        if (u) u = desugar(std::move(u), diags_);
        if (u) units.push_back(std::move(u));
    }
    if (!diags_.has_errors()) prog_ = analyze(std::move(units), diags_);
    checked_ = true;
    return !diags_.has_errors();
}

std::string Session::render_diags() const {
    std::string out;
    for (const auto& d : diags_.all()) out += d.render() + "\n";
    return out;
}

std::string Session::dump(const std::string& stage, DiagSink& d) {
    std::string out;
    for (const auto& [file, text] : sources_) {
        NodePtr u = parse_one(text, file, d);
        if (!u) continue;
        if (stage == "desugar") u = desugar(std::move(u), d);
        if (u) out += pretty_print(*u);
    }
    return out;
}

int Session::run(const RunOptions& opts, std::ostream& out, std::ostream& err,
                 const std::string& entry) {
    if (!check()) {
        err << render_diags();
        return 2;
    }
    auto fit = prog_->func_by_name.find(entry);
    if (fit == prog_->func_by_name.end() || fit->second->native) {
        err << "error: no entry function '" << entry << "'\n";
        return 2;
    }
    reset_accounting();
    int rc = 0;
    RunReport rep;
    {
        ExecCtx cx;
        cx.prog = prog_.get();
        cx.opts = opts;
        cx.out = &out;
        cx.out_real = &out;
        cx.err = &err;
        Sched sched(opts, &cx.stats);
        SyncRegistry sync(cx);
        cx.sched = &sched;
        cx.sync = &sync;
        cx.globals.resize(prog_->globals.size());
        try {
            for (size_t i = 0; i < prog_->globals.size(); ++i) {
                const Node* d = prog_->globals[i];
                auto [nv, nr] = prog_->global_frame_sizes[i];
                Frame f(&cx.root_region);
                f.vals.resize(static_cast<size_t>(nv));
                f.refs.resize(static_cast<size_t>(nr));
                Env env{&f, nullptr, nullptr, nullptr};
                if (d->child(1))
                    cx.globals[i] = eval_expr(cx, env, d->child(1), &cx.root_region);
            }
            run_plain_body(cx, fit->second, nullptr, nullptr, 0, &cx.root_region,
                           nullptr);
        } catch (Fault& f) {
            err << render_fault(f) << "\n";
            rc = 1;
        }
        if (opts.debug_sync && sync.waiting_count() > 0)
            err << "debug-sync: " << sync.waiting_count()
                << " queued caller(s) still parked at exit\n";
        rep.spawned = cx.stats.spawned.load();
        rep.steals = cx.stats.steals.load();
        rep.executed = cx.stats.executed.load();
        rep.discarded = cx.stats.discarded.load();
        rep.max_active = cx.stats.max_active.load();
        rep.servers = cx.stats.servers;
        cx.globals.clear();
    }
    rep.live_at_exit = live_objects();
    rep.peak_live = peak_live_objects();
    rep.valid = true;
    report_ = rep;
    if (opts.stats) emit_stats(report_, err);
    return rc;
}

// Replay earlier lines with output muted, then run the new line; session
// state is rebuilt deterministically each time.
int Session::eval_repl_line(const std::string& line, const RunOptions& opts,
                            std::ostream& out, std::ostream& err) {
    DiagSink d;
    std::vector<NodePtr> stmts;
    for (const auto& prev : repl_lines_)
        stmts.push_back(parse_repl_line(prev, d));
    NodePtr cur = parse_repl_line(line, d);
    if (d.has_errors() || !cur) {
        for (const auto& dg : d.all()) err << dg.render() << "\n";
        return 2;
    }

    auto body = std::make_unique<Node>(NodeKind::Block, Span{});
    body->children.push_back(make_call_stmt(make_call("@mute", nullptr)));
    for (auto& s : stmts)
        if (s) body->children.push_back(std::move(s));
    body->children.push_back(make_call_stmt(make_call("@unmute", nullptr)));
    body->children.push_back(std::move(cur));

    auto fn = std::make_unique<Node>(NodeKind::OpDecl, Span{});
    fn->text = "@repl";
    fn->children.push_back(std::make_unique<Node>(NodeKind::List, Span{}));
    fn->children.push_back(nullptr);  // result
    fn->children.push_back(nullptr);  // precond
    fn->children.push_back(std::move(body));
    fn->children.push_back(nullptr);  // rename
    fn->children.push_back(nullptr);  // queue cond
    auto unit = std::make_unique<Node>(NodeKind::Unit, Span{});
    unit->children.push_back(std::move(fn));

    std::vector<NodePtr> units;
    for (const auto& [file, text] : sources_) {
        NodePtr u = parse_one(text, file, d);
        if (u) u = desugar(std::move(u), d);
        if (u) units.push_back(std::move(u));
    }
    units.push_back(desugar(std::move(unit), d));
    if (d.has_errors()) {
        for (const auto& dg : d.all()) err << dg.render() << "\n";
        return 2;
    }
    auto prog = analyze(std::move(units), d);
    if (d.has_errors() || !prog) {
        for (const auto& dg : d.all()) err << dg.render() << "\n";
        return 2;
    }

    // run in a private session so the loaded program cache stays intact
    Session inner;
    inner.prog_ = std::move(prog);
    inner.checked_ = true;
    int rc = inner.run(opts, out, err, "@repl");
    report_ = inner.report_;
    if (rc == 0) repl_lines_.push_back(line);
    return rc;
}

int Session::repl(std::istream& in, std::ostream& out, std::ostream& err,
                  const RunOptions& opts) {
    std::string line;
    out << "psl> " << std::flush;
    while (std::getline(in, line)) {
        size_t b = line.find_first_not_of(" \t");
        std::string trimmed = b == std::string::npos ? "" : line.substr(b);
        if (trimmed.empty()) {
            out << "psl> " << std::flush;
            continue;
        }
        if (trimmed == ":quit") break;
        if (trimmed == ":stats") {
            if (report_.valid)
                emit_stats(report_, out);
            else
                out << "no runs yet\n";
        } else if (trimmed.rfind(":load ", 0) == 0) {
            std::string path = trimmed.substr(6);
            std::string io_error;
            if (!load_file(path, io_error))
                err << "error: " << io_error << "\n";
            else
                out << "loaded " << path << "\n";
        } else if (!trimmed.empty() && trimmed[0] == ':') {
            err << "unknown command " << trimmed << "\n";
        } else {
            eval_repl_line(trimmed, opts, out, err);
        }
        out << "psl> " << std::flush;
    }
    return 0;
}

}  // namespace psl
