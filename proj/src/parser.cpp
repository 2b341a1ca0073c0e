#include "parser.hpp"

#include <initializer_list>

namespace psl {

namespace {

struct SyntaxError {};

class Parser {
public:
    Parser(const std::vector<Token>& toks, DiagSink& diags, std::string file)
        : toks_(toks), diags_(diags), file_(std::move(file)) {}

    NodePtr unit() {
        auto u = make_node(NodeKind::Unit, cur().span);
        skip_seps();
        while (!cur().is(TokenKind::EndOfFile)) {
            try {
                u->children.push_back(declaration());
            } catch (SyntaxError&) {
                resync();
            }
            skip_seps();
        }
        return u;
    }

    NodePtr expression_entry() {
        auto e = expr();
        skip_nl();
        if (!cur().is(TokenKind::EndOfFile))
            error("expected end of input after expression");
        return e;
    }

    NodePtr statement_entry() {
        skip_seps();
        NodePtr s;
        if (cur().is_kw("interface") || cur().is_kw("class") || cur().is_kw("abstract") ||
            cur().is_kw("concurrent") || cur().is_kw("func") || cur().is_kw("op") ||
            cur().is_kw("type"))
            s = declaration();
        else
            s = statement();
        skip_seps();
        return s;
    }

private:
    // ---- token plumbing ------------------------------------------------

    const Token& at(size_t i) const {
        return i < toks_.size() ? toks_[i] : toks_.back();
    }
    const Token& cur() const { return at(pos_); }
    const Token& next() const { return at(pos_ + 1); }
    void advance() {
        if (pos_ + 1 < toks_.size()) ++pos_;
    }

    void skip_nl() {
        while (cur().is(TokenKind::Newline)) advance();
    }
    void skip_seps() {
        while (cur().is(TokenKind::Newline) || cur().is_punct(";")) advance();
    }
    // Index of next non-newline token at/after pos_.
    size_t peek_past_nl() const {
        size_t i = pos_;
        while (at(i).is(TokenKind::Newline)) ++i;
        return i;
    }
    // Like peek_past_nl but also skips `;`, for spotting `||` between
    // already-terminated statements.
    size_t peek_past_seps() const {
        size_t i = pos_;
        while (at(i).is(TokenKind::Newline) || at(i).is_punct(";")) ++i;
        return i;
    }

    [[noreturn]] void error(const std::string& msg) {
        diags_.error("SYNTAX", msg + " (found " + describe(cur()) + ")", cur().span, file_);
        throw SyntaxError{};
    }
    static std::string describe(const Token& t) {
        if (t.is(TokenKind::EndOfFile)) return "end of input";
        if (t.is(TokenKind::Newline)) return "end of line";
        return "'" + t.text + "'";
    }

    void resync() {
        // Skip to the next statement boundary.
        while (!cur().is(TokenKind::EndOfFile) && !cur().is(TokenKind::Newline) &&
               !cur().is_punct(";"))
            advance();
    }

    void expect_kw(std::string_view kw) {
        if (!cur().is_kw(kw)) error("expected '" + std::string(kw) + "'");
        advance();
    }
    void expect_op(std::string_view op) {
        if (!cur().is_op(op)) error("expected '" + std::string(op) + "'");
        advance();
    }
    void expect_punct(std::string_view p) {
        if (!cur().is_punct(p)) error("expected '" + std::string(p) + "'");
        advance();
    }
    bool accept_kw(std::string_view kw) {
        if (cur().is_kw(kw)) {
            advance();
            return true;
        }
        return false;
    }
    bool accept_op(std::string_view op) {
        if (cur().is_op(op)) {
            advance();
            return true;
        }
        return false;
    }
    bool accept_punct(std::string_view p) {
        if (cur().is_punct(p)) {
            advance();
            return true;
        }
        return false;
    }

    std::string expect_ident() {
        if (!cur().is(TokenKind::Identifier)) error("expected identifier");
        std::string s = cur().text;
        advance();
        return s;
    }

    // A :: separated module path; returns the full dotted text.
    std::string qualified_name() {
        std::string path = expect_ident();
        while (cur().is_op("::") && next().is(TokenKind::Identifier)) {
            advance();
            path += "::" + expect_ident();
        }
        return path;
    }

    // ---- declarations --------------------------------------------------

    NodePtr declaration() {
        uint16_t prefix = 0;
        Span sp = cur().span;
        while (true) {
            if (accept_kw("abstract")) {
                prefix |= FlagAbstract;
            } else if (accept_kw("concurrent")) {
                prefix |= FlagConcurrent;
            } else {
                break;
            }
        }
        if (cur().is_kw("interface")) return interface_decl(prefix, sp);
        if (cur().is_kw("class")) return class_decl(prefix, sp);
        if (prefix != 0) error("expected 'interface' or 'class'");
        if (cur().is_kw("func") || cur().is_kw("op")) return op_decl(/*in_interface=*/false);
        if (cur().is_kw("type")) return type_decl();
        if (cur().is_kw("var") || cur().is_kw("const")) return var_decl();
        error("expected declaration");
    }

    NodePtr interface_decl(uint16_t prefix, Span sp) {
        expect_kw("interface");
        auto n = make_node(NodeKind::InterfaceDecl, sp);
        n->flags |= prefix;
        n->text = qualified_name();
        auto formals = make_node(NodeKind::List, cur().span);
        if (at(peek_past_nl()).is_op("<")) {
            pos_ = peek_past_nl();
            formal_list(*formals);
        }
        n->children.push_back(std::move(formals));
        auto impls = make_node(NodeKind::List, cur().span);
        skip_nl();
        if (accept_kw("implements")) {
            do {
                skip_nl();
                impls->children.push_back(type_ref());
                skip_nl();
            } while (accept_punct(","));
        }
        n->children.push_back(std::move(impls));
        skip_nl();
        expect_kw("is");
        skip_seps();
        while (!cur().is_kw("end")) {
            if (cur().is(TokenKind::EndOfFile)) error("missing 'end interface'");
            try {
                n->children.push_back(interface_item());
            } catch (SyntaxError&) {
                resync();
            }
            skip_seps();
        }
        expect_kw("end");
        accept_kw("abstract");
        accept_kw("concurrent");
        expect_kw("interface");
        check_end_name(n->text);
        return n;
    }

    NodePtr interface_item() {
        if (cur().is(TokenKind::Identifier) && cur().text == "lock_free" &&
            (next().is_kw("func") || next().is_kw("op"))) {
            advance();
            auto d = op_decl(/*in_interface=*/true);
            d->set(FlagLockFree);
            return d;
        }
        if (cur().is_kw("func") || cur().is_kw("op")) return op_decl(/*in_interface=*/true);
        if (cur().is_kw("type")) return type_decl();
        if (cur().is_kw("var") || cur().is_kw("const")) return component_decl();
        if (cur().is_kw("interface") || cur().is_kw("abstract") || cur().is_kw("concurrent"))
            return declaration();
        error("expected interface item");
    }

    NodePtr class_decl(uint16_t prefix, Span sp) {
        expect_kw("class");
        auto n = make_node(NodeKind::ClassDecl, sp);
        n->flags |= prefix;
        n->text = qualified_name();
        if (at(peek_past_nl()).is_op("<")) {
            pos_ = peek_past_nl();
            auto ignored = make_node(NodeKind::List, cur().span);
            formal_list(*ignored);
        }
        skip_nl();
        expect_kw("is");
        auto internal = make_node(NodeKind::List, cur().span);
        auto exported = make_node(NodeKind::List, cur().span);
        skip_seps();
        while (!cur().is_kw("exports") && !cur().is_kw("end")) {
            if (cur().is(TokenKind::EndOfFile)) error("missing 'end class'");
            try {
                internal->children.push_back(class_item());
            } catch (SyntaxError&) {
                resync();
            }
            skip_seps();
        }
        if (accept_kw("exports")) {
            skip_seps();
            while (!cur().is_kw("end")) {
                if (cur().is(TokenKind::EndOfFile)) error("missing 'end class'");
                try {
                    exported->children.push_back(class_item());
                } catch (SyntaxError&) {
                    resync();
                }
                skip_seps();
            }
        }
        expect_kw("end");
        accept_kw("concurrent");
        expect_kw("class");
        check_end_name(n->text);
        n->children.push_back(std::move(internal));
        n->children.push_back(std::move(exported));
        return n;
    }

    NodePtr class_item() {
        if (cur().is_kw("func") || cur().is_kw("op")) return op_decl(/*in_interface=*/false);
        if (cur().is_kw("type")) return type_decl();
        if (cur().is_kw("var") || cur().is_kw("const")) return component_decl();
        if (cur().is_kw("interface") || cur().is_kw("abstract") || cur().is_kw("concurrent"))
            return declaration();
        error("expected class item");
    }

    void check_end_name(const std::string& declared) {
        if (cur().is(TokenKind::Identifier)) {
            std::string name = qualified_name();
            // Accept the full path or its last segment.
            auto last = [](const std::string& s) {
                auto p = s.rfind("::");
                return p == std::string::npos ? s : s.substr(p + 2);
            };
            if (name != declared && last(name) != last(declared))
                diags_.error("SYNTAX", "mismatched end name '" + name + "', expected '" +
                                           declared + "'",
                             cur().span, file_);
        }
    }

    void formal_list(Node& out) {
        expect_op("<");
        skip_nl();
        if (accept_op(">")) return;
        while (true) {
            skip_nl();
            Span sp = cur().span;
            std::string name = expect_ident();
            if (accept_kw("is")) {
                auto f = make_node(NodeKind::FormalType, sp);
                f->text = name;
                f->children.push_back(type_ref());
                f->children.push_back(nullptr);
                out.children.push_back(std::move(f));
            } else if (accept_punct(":")) {
                auto f = make_node(NodeKind::FormalValue, sp);
                f->text = name;
                f->children.push_back(type_ref());
                if (accept_op(":=")) {
                    ++no_gt_depth_;
                    f->children.push_back(expr());
                    --no_gt_depth_;
                } else {
                    f->children.push_back(nullptr);
                }
                out.children.push_back(std::move(f));
            } else {
                error("expected 'is' or ':' in module formal");
            }
            skip_nl();
            if (accept_punct(";") || accept_punct(",")) continue;
            break;
        }
        expect_op(">");
    }

    NodePtr type_decl() {
        Span sp = cur().span;
        expect_kw("type");
        auto n = make_node(NodeKind::TypeDecl, sp);
        n->text = expect_ident();
        expect_kw("is");
        n->children.push_back(type_ref());
        return n;
    }

    NodePtr component_decl() {
        Span sp = cur().span;
        bool is_var = cur().is_kw("var");
        advance();
        auto n = make_node(NodeKind::ComponentDecl, sp);
        if (is_var) n->set(FlagVar);
        n->text = expect_ident();
        expect_punct(":");
        n->children.push_back(opt_type_ref());
        if (accept_op(":=")) {
            n->children.push_back(expr());
        } else {
            n->children.push_back(nullptr);
        }
        return n;
    }

    // optional-prefixed type reference
    NodePtr opt_type_ref() {
        bool opt = accept_kw("optional");
        auto t = type_ref();
        if (opt) t->set(FlagOptional);
        return t;
    }

    NodePtr type_ref() {
        Span sp = cur().span;
        auto t = make_node(NodeKind::TypeRef, sp);
        t->text = qualified_name();
        if (cur().is_op("<")) {
            t->flags |= FlagAngles;
            advance();
            skip_nl();
            if (accept_op(">")) return t;
            while (true) {
                skip_nl();
                t->children.push_back(actual_arg());
                skip_nl();
                if (accept_punct(",") || accept_punct(";")) continue;
                break;
            }
            expect_op(">");
        }
        return t;
    }

    // Instantiation actual: named or positional, type or value.
    NodePtr actual_arg() {
        if (cur().is(TokenKind::Identifier) && next().is_op("=>")) {
            auto n = make_node(NodeKind::NamedArg, cur().span);
            n->text = expect_ident();
            expect_op("=>");
            skip_nl();
            n->children.push_back(type_or_value());
            return n;
        }
        return type_or_value();
    }

    NodePtr type_or_value() {
        if (cur().is_kw("optional")) return opt_type_ref();
        if (cur().is(TokenKind::Identifier)) {
            const Token& n1 = next();
            if (n1.is_op("<") || n1.is_op(">") || n1.is_op("::") || n1.is_punct(",") ||
                n1.is_punct(";"))
                return type_ref();
        }
        ++no_gt_depth_;
        auto e = expr();
        --no_gt_depth_;
        return e;
    }

    NodePtr op_decl(bool in_interface) {
        Span sp = cur().span;
        bool is_op = cur().is_kw("op");
        advance();
        auto n = make_node(NodeKind::OpDecl, sp);
        if (is_op) n->set(FlagIsOp);
        if (cur().is(TokenKind::StringLit)) {
            n->text = cur().text;
            advance();
        } else {
            n->text = expect_ident();
        }
        auto params = make_node(NodeKind::List, cur().span);
        param_list(*params);
        n->children.push_back(std::move(params));

        NodePtr result;
        NodePtr precond;
        if (accept_punct("{")) {
            skip_nl();
            precond = expr();
            skip_nl();
            expect_punct("}");
        }
        skip_nl_if_then({"->", "is"});
        if (accept_op("->")) {
            skip_nl();
            result = result_spec();
        }
        n->children.push_back(std::move(result));
        n->children.push_back(std::move(precond));

        NodePtr body, rename, queue_cond;
        skip_nl_if_then({"is"});
        if (accept_kw("is")) {
            skip_nl();
            if (cur().is(TokenKind::StringLit) ||
                (cur().is(TokenKind::Identifier) && is_rename_target())) {
                rename = make_node(NodeKind::Name, cur().span);
                rename->text = cur().text;
                if (cur().is(TokenKind::StringLit)) rename->set(FlagOpName);
                advance();
            } else if (cur().is_punct("(")) {
                // expression function: is (expr)
                advance();
                skip_nl();
                body = expr();
                skip_nl();
                expect_punct(")");
            } else {
                if (accept_kw("queued")) {
                    bool is_while = false;
                    if (accept_kw("while"))
                        is_while = true;
                    else
                        expect_kw("until");
                    queue_cond = expr();
                    if (is_while) n->set(FlagQueuedWhile);
                    skip_nl();
                    expect_kw("then");
                }
                body = stmt_body({"end"});
                expect_kw("end");
                if (is_op)
                    expect_kw("op");
                else
                    expect_kw("func");
                if (cur().is(TokenKind::StringLit)) {
                    if (cur().text != n->text)
                        diags_.error("SYNTAX",
                                     "mismatched end name '" + cur().text + "'", cur().span,
                                     file_);
                    advance();
                } else {
                    check_end_name(n->text);
                }
            }
        }
        (void)in_interface;
        n->children.push_back(std::move(body));
        n->children.push_back(std::move(rename));
        n->children.push_back(std::move(queue_cond));
        return n;
    }

    // After `is`, a bare identifier on its own line is a rename target only
    // if it is immediately followed by a separator (renames to funcs).
    bool is_rename_target() const {
        const Token& n1 = next();
        return n1.is(TokenKind::Newline) || n1.is_punct(";") || n1.is(TokenKind::EndOfFile);
    }

    // Skip newlines only if the next significant token is one of the given
    // continuation markers (operators or keywords).
    void skip_nl_if_then(std::initializer_list<std::string_view> marks) {
        size_t i = peek_past_nl();
        for (auto m : marks) {
            if (at(i).is_op(m) || at(i).is_kw(m)) {
                pos_ = i;
                return;
            }
        }
    }

    NodePtr result_spec() {
        auto r = make_node(NodeKind::ResultSpec, cur().span);
        if (accept_kw("ref")) r->set(FlagRef);
        if (accept_kw("optional")) r->set(FlagOptional);
        if (cur().is(TokenKind::Identifier) && next().is_punct(":")) {
            r->text = expect_ident();
            expect_punct(":");
            if (accept_kw("ref")) r->set(FlagRef);
            if (accept_kw("optional")) r->set(FlagOptional);
        }
        r->children.push_back(type_ref());
        if (accept_punct("{")) {
            skip_nl();
            r->children.push_back(expr());
            skip_nl();
            expect_punct("}");
        } else {
            r->children.push_back(nullptr);
        }
        return r;
    }

    void param_list(Node& out) {
        expect_punct("(");
        skip_nl();
        if (accept_punct(")")) return;
        while (true) {
            skip_nl();
            parse_param_group(out);
            skip_nl();
            if (accept_punct(";") || accept_punct(",")) continue;
            break;
        }
        expect_punct(")");
    }

    void parse_param_group(Node& out) {
        Span sp = cur().span;
        ParamMode mode = ParamMode::ReadOnly;
        if (accept_kw("locked"))
            mode = accept_kw("var") ? ParamMode::LockedVar : ParamMode::Locked;
        else if (accept_kw("queued"))
            mode = accept_kw("var") ? ParamMode::QueuedVar : ParamMode::Queued;
        else if (accept_kw("ref"))
            mode = accept_kw("var") ? ParamMode::RefVar : ParamMode::Ref;
        else if (accept_kw("var"))
            mode = ParamMode::Var;

        // Either `Name [, Name2] : Type` or a type-only shorthand param.
        if (cur().is(TokenKind::Identifier) &&
            (next().is_punct(":") || next().is_punct(","))) {
            std::vector<std::string> names;
            names.push_back(expect_ident());
            while (accept_punct(",")) names.push_back(expect_ident());
            expect_punct(":");
            bool opt = accept_kw("optional");
            auto t = type_ref();
            for (auto& nm : names) {
                auto p = make_node(NodeKind::Param, sp);
                p->text = nm;
                p->mode = mode;
                if (opt) p->set(FlagOptional);
                p->children.push_back(clone(*t));
                out.children.push_back(std::move(p));
            }
        } else {
            bool opt = accept_kw("optional");
            auto t = type_ref();
            auto p = make_node(NodeKind::Param, sp);
            p->text = t->simple_name();
            p->mode = mode;
            if (opt) p->set(FlagOptional);
            p->children.push_back(std::move(t));
            out.children.push_back(std::move(p));
        }
    }

    // ---- statements ----------------------------------------------------

    bool at_body_end() const {
        return cur().is_kw("end") || cur().is_kw("exports") || cur().is_kw("else") ||
               cur().is_kw("elsif") || cur().is(TokenKind::EndOfFile);
    }

    // Statement list with `then` sections and `||` parallel items.
    NodePtr stmt_body(std::initializer_list<std::string_view> /*ends*/) {
        Span sp = cur().span;
        std::vector<NodePtr> sections;
        auto section = make_node(NodeKind::Block, sp);
        skip_seps();
        while (!at_body_end()) {
            if (cur().is_kw("then")) {
                advance();
                sections.push_back(std::move(section));
                section = make_node(NodeKind::Block, cur().span);
                skip_seps();
                continue;
            }
            NodePtr s;
            try {
                s = statement();
            } catch (SyntaxError&) {
                resync();
                skip_seps();
                continue;
            }
            // `||` may sit on its own line between parallel branches.
            size_t look = peek_past_seps();
            if (at(look).is_op("||")) {
                pos_ = look;
                auto group = make_node(NodeKind::ParallelGroup, cur().span);
                group->children.push_back(std::move(s));
                while (accept_op("||")) {
                    skip_seps();
                    group->children.push_back(statement());
                    size_t l2 = peek_past_seps();
                    if (at(l2).is_op("||")) pos_ = l2;
                }
                section->children.push_back(std::move(group));
            } else {
                section->children.push_back(std::move(s));
            }
            skip_seps();
        }
        if (sections.empty()) return section;
        sections.push_back(std::move(section));
        auto tg = make_node(NodeKind::ThenGroup, sp);
        tg->children = std::move(sections);
        return tg;
    }

    NodePtr statement() {
        if (cur().is_kw("var") || cur().is_kw("const")) return var_decl();
        if (cur().is_kw("ref")) return ref_decl();
        if (cur().is_kw("type")) return type_decl();
        if (cur().is_kw("if")) return if_stmt();
        if (cur().is_kw("for")) return for_stmt();
        if (cur().is_kw("until")) return until_stmt();
        if (cur().is_kw("return")) return return_stmt();
        if (cur().is_kw("exit")) {
            auto n = make_node(NodeKind::ExitLoop, cur().span);
            advance();
            expect_kw("loop");
            return n;
        }
        if (cur().is_kw("continue")) return continue_stmt();
        return expr_stmt();
    }

    NodePtr var_decl() {
        Span sp = cur().span;
        bool is_var = cur().is_kw("var");
        advance();
        auto n = make_node(NodeKind::VarDecl, sp);
        if (is_var) n->set(FlagVar);
        n->text = expect_ident();
        NodePtr anchor;
        if (accept_kw("for")) anchor = expr_postfix_path();
        NodePtr type;
        if (accept_punct(":")) type = opt_type_ref();
        NodePtr init;
        if (accept_op(":=")) {
            init = expr();
        } else if (accept_op("<==")) {
            init = expr();
            n->set(FlagMoveInit);
        }
        n->children.push_back(std::move(type));
        n->children.push_back(std::move(init));
        n->children.push_back(std::move(anchor));
        return n;
    }

    NodePtr ref_decl() {
        Span sp = cur().span;
        expect_kw("ref");
        auto n = make_node(NodeKind::RefDecl, sp);
        n->text = expect_ident();
        expect_op("=>");
        n->children.push_back(expr());
        return n;
    }

    NodePtr if_stmt() {
        Span sp = cur().span;
        advance();  // if / elsif
        auto n = make_node(NodeKind::If, sp);
        n->children.push_back(expr());
        skip_nl();
        expect_kw("then");
        n->children.push_back(stmt_body({}));
        if (cur().is_kw("elsif")) {
            n->children.push_back(if_stmt_tail());
            return n;
        }
        if (accept_kw("else")) {
            n->children.push_back(stmt_body({}));
        } else {
            n->children.push_back(nullptr);
        }
        expect_kw("end");
        expect_kw("if");
        return n;
    }

    // elsif chain shares the closing `end if` with the outermost if.
    NodePtr if_stmt_tail() {
        Span sp = cur().span;
        advance();  // elsif
        auto n = make_node(NodeKind::If, sp);
        n->children.push_back(expr());
        skip_nl();
        expect_kw("then");
        n->children.push_back(stmt_body({}));
        if (cur().is_kw("elsif")) {
            n->children.push_back(if_stmt_tail());
        } else if (accept_kw("else")) {
            n->children.push_back(stmt_body({}));
            expect_kw("end");
            expect_kw("if");
        } else {
            n->children.push_back(nullptr);
            expect_kw("end");
            expect_kw("if");
        }
        return n;
    }

    NodePtr for_stmt() {
        Span sp = cur().span;
        expect_kw("for");
        if (accept_kw("each")) {
            auto n = make_node(NodeKind::ForEach, sp);
            n->text = expect_ident();
            expect_kw("of");
            n->children.push_back(expr());
            skip_nl();
            expect_kw("loop");
            n->children.push_back(loop_body());
            return n;
        }
        std::string var = expect_ident();
        if (accept_kw("in")) {
            auto n = make_node(NodeKind::ForInRange, sp);
            n->text = var;
            n->children.push_back(expr());
            skip_nl();
            if (accept_kw("reverse"))
                n->set(FlagReverse);
            else
                accept_kw("forward");
            skip_nl();
            expect_kw("loop");
            n->children.push_back(loop_body());
            return n;
        }
        auto n = make_node(NodeKind::ForThenWhile, sp);
        n->text = var;
        if (accept_op("=>"))
            n->set(FlagRef);
        else
            expect_op(":=");
        n->children.push_back(expr());
        skip_nl_if_then({"then", "while", "loop"});
        if (accept_kw("then")) {
            n->children.push_back(expr());
            skip_nl_if_then({"while", "loop"});
        } else {
            n->children.push_back(nullptr);
        }
        if (accept_kw("while")) {
            n->children.push_back(expr());
            skip_nl();
        } else {
            n->children.push_back(nullptr);
        }
        expect_kw("loop");
        n->children.push_back(loop_body());
        return n;
    }

    NodePtr until_stmt() {
        Span sp = cur().span;
        expect_kw("until");
        auto n = make_node(NodeKind::LoopUntil, sp);
        n->children.push_back(expr());
        skip_nl();
        expect_kw("loop");
        n->children.push_back(loop_body());
        return n;
    }

    NodePtr loop_body() {
        auto body = stmt_body({});
        expect_kw("end");
        expect_kw("loop");
        return body;
    }

    NodePtr return_stmt() {
        Span sp = cur().span;
        expect_kw("return");
        auto n = make_node(NodeKind::Return, sp);
        // A value is present only if an expression starts on the same line.
        if (!cur().is(TokenKind::Newline) && !cur().is_punct(";") && !at_body_end() &&
            !cur().is_op("||") && !cur().is_kw("then"))
            n->children.push_back(expr());
        return n;
    }

    NodePtr continue_stmt() {
        Span sp = cur().span;
        expect_kw("continue");
        expect_kw("loop");
        auto n = make_node(NodeKind::ContinueWith, sp);
        if (accept_kw("with")) {
            while (true) {
                if (cur().is(TokenKind::Identifier) && next().is_op("=>")) {
                    auto b = make_node(NodeKind::NamedArg, cur().span);
                    b->text = expect_ident();
                    expect_op("=>");
                    b->children.push_back(expr());
                    n->children.push_back(std::move(b));
                } else {
                    n->children.push_back(expr());
                }
                if (!accept_punct(",")) break;
            }
        }
        return n;
    }

    NodePtr expr_stmt() {
        Span sp = cur().span;
        auto e = expr();
        if (cur().is_op(":=") || cur().is_op("<==") || cur().is_op("<=>")) {
            NodeKind k = cur().is_op(":=")  ? NodeKind::Assign
                       : cur().is_op("<==") ? NodeKind::Move
                                            : NodeKind::Swap;
            advance();
            auto n = make_node(k, sp);
            n->children.push_back(std::move(e));
            n->children.push_back(expr());
            return n;
        }
        // Compound insert forms: M |= X and synonyms lex as single operators.
        if (cur().is_op("|=") || cur().is_op("+=") || cur().is_op("-=")) {
            std::string opname = cur().text;
            advance();
            auto call = make_node(NodeKind::CallExpr, sp);
            auto callee = make_node(NodeKind::Name, sp);
            callee->text = opname;
            callee->set(FlagOpName);
            call->children.push_back(std::move(callee));
            call->children.push_back(std::move(e));
            call->children.push_back(expr());
            auto n = make_node(NodeKind::CallStmt, sp);
            n->children.push_back(std::move(call));
            return n;
        }
        if (e->kind != NodeKind::CallExpr)
            error("expected statement");
        auto n = make_node(NodeKind::CallStmt, sp);
        n->children.push_back(std::move(e));
        return n;
    }

    // Restricted path expression for `for X` anchors.
    NodePtr expr_postfix_path() { return postfix(); }

    // ---- expressions ---------------------------------------------------

    // Continue a binary chain across newlines when the next significant
    // token is one of the given operators.
    bool more_binop(std::initializer_list<std::string_view> ops) {
        size_t i = peek_past_nl();
        for (auto op : ops) {
            bool match = at(i).is_op(op) || (at(i).is(TokenKind::Keyword) && at(i).text == op);
            if (match) {
                pos_ = i;
                return true;
            }
        }
        return false;
    }

    NodePtr expr() { return expr_or(); }

    NodePtr make_binary(std::string op, NodePtr l, NodePtr r, Span sp) {
        auto n = make_node(NodeKind::Binary, sp);
        n->text = std::move(op);
        n->children.push_back(std::move(l));
        n->children.push_back(std::move(r));
        return n;
    }

    NodePtr expr_or() {
        auto l = expr_and();
        while (more_binop({"or"})) {
            Span sp = cur().span;
            advance();
            l = make_binary("or", std::move(l), expr_and(), sp);
        }
        return l;
    }

    NodePtr expr_and() {
        auto l = expr_membership();
        while (more_binop({"and"})) {
            Span sp = cur().span;
            advance();
            l = make_binary("and", std::move(l), expr_membership(), sp);
        }
        return l;
    }

    NodePtr expr_membership() {
        auto l = expr_cmp();
        if (cur().is_kw("in")) {
            Span sp = cur().span;
            advance();
            auto n = make_node(NodeKind::InSet, sp);
            n->children.push_back(std::move(l));
            n->children.push_back(expr_cmp());
            return n;
        }
        if (cur().is_kw("not") && next().is_kw("in")) {
            Span sp = cur().span;
            advance();
            advance();
            auto n = make_node(NodeKind::InSet, sp);
            n->set(FlagNegated);
            n->children.push_back(std::move(l));
            n->children.push_back(expr_cmp());
            return n;
        }
        if (cur().is_kw("is") && next().is_kw("null")) {
            Span sp = cur().span;
            advance();
            advance();
            auto n = make_node(NodeKind::IsNull, sp);
            n->children.push_back(std::move(l));
            return n;
        }
        if (cur().is_kw("not") && next().is_kw("null")) {
            Span sp = cur().span;
            advance();
            advance();
            auto n = make_node(NodeKind::NotNull, sp);
            n->children.push_back(std::move(l));
            return n;
        }
        return l;
    }

    bool at_relop() const {
        if (no_gt_depth_ > 0 && (cur().is_op(">") || cur().is_op(">=")))
            return false;
        return cur().is_op("==") || cur().is_op("!=") || cur().is_op("<") ||
               cur().is_op("<=") || cur().is_op(">") || cur().is_op(">=") ||
               cur().is_op("=?");
    }

    NodePtr expr_cmp() {
        auto l = expr_concat();
        if (at_relop()) {
            Span sp = cur().span;
            std::string op = cur().text;
            advance();
            auto r = expr_concat();
            if (at_relop())
                error("chained comparisons require parentheses");
            return make_binary(std::move(op), std::move(l), std::move(r), sp);
        }
        return l;
    }

    NodePtr expr_concat() {
        auto l = expr_range();
        while (more_binop({"|"})) {
            Span sp = cur().span;
            advance();
            l = make_binary("|", std::move(l), expr_range(), sp);
        }
        return l;
    }

    NodePtr expr_range() {
        auto l = expr_add();
        if (cur().is_op("..") || more_binop({".."})) {
            Span sp = cur().span;
            advance();
            return make_binary("..", std::move(l), expr_add(), sp);
        }
        return l;
    }

    NodePtr expr_add() {
        auto l = expr_mul();
        while (more_binop({"+", "-"})) {
            Span sp = cur().span;
            std::string op = cur().text;
            advance();
            l = make_binary(std::move(op), std::move(l), expr_mul(), sp);
        }
        return l;
    }

    NodePtr expr_mul() {
        auto l = unary();
        while (cur().is_op("*") || cur().is_op("/") || cur().is_kw("mod")) {
            Span sp = cur().span;
            std::string op = cur().text;
            advance();
            l = make_binary(std::move(op), std::move(l), unary(), sp);
        }
        return l;
    }

    // -2**63 parses as neg(pow(2, 63)): power binds tighter than a leading
    // unary minus, while the exponent may itself carry a sign.
    NodePtr unary() {
        if (cur().is_op("-") || cur().is_kw("not")) {
            Span sp = cur().span;
            std::string op = cur().text;
            advance();
            auto n = make_node(NodeKind::Unary, sp);
            n->text = std::move(op);
            n->children.push_back(unary());
            return n;
        }
        if (cur().is_op("+")) {
            advance();  // unary plus is the identity
            return unary();
        }
        return expr_pow();
    }

    NodePtr expr_pow() {
        auto l = postfix();
        if (cur().is_op("**")) {
            Span sp = cur().span;
            advance();
            return make_binary("**", std::move(l), unary(), sp);
        }
        return l;
    }

    NodePtr postfix() {
        auto e = primary();
        while (true) {
            if (cur().is_punct("(")) {
                auto call = make_node(NodeKind::CallExpr, e->span);
                call->children.push_back(std::move(e));
                call_args(*call);
                e = std::move(call);
                continue;
            }
            if (cur().is_punct("[")) {
                e = index_or_slice(std::move(e));
                continue;
            }
            if (cur().is_op(".")) {
                advance();
                std::string member = expect_ident();
                NodeKind k = (member == "First" || member == "Last") ? NodeKind::Attribute
                                                                    : NodeKind::Selected;
                auto n = make_node(k, e->span);
                n->text = std::move(member);
                n->children.push_back(std::move(e));
                e = std::move(n);
                continue;
            }
            if (cur().is_op("::")) {
                // Type qualification: Ordering::from_univ(...), Node::(...)
                advance();
                skip_nl();
                if (cur().is_punct("(")) {
                    auto agg = paren_aggregate();
                    agg->text = name_of(*e);
                    e = std::move(agg);
                    continue;
                }
                auto q = make_node(NodeKind::Qualified, e->span);
                auto tr = make_node(NodeKind::TypeRef, e->span);
                tr->text = name_of(*e);
                q->children.push_back(std::move(tr));
                q->text = expect_ident();
                e = std::move(q);
                continue;
            }
            break;
        }
        return e;
    }

    static std::string name_of(const Node& e) {
        if (e.kind == NodeKind::Name) return e.text;
        if (e.kind == NodeKind::Qualified && e.child(0))
            return e.child(0)->text + "::" + e.text;
        return e.text;
    }

    void call_args(Node& call) {
        expect_punct("(");
        skip_nl();
        if (accept_punct(")")) return;
        while (true) {
            skip_nl();
            if (cur().is(TokenKind::Identifier) && next().is_op("=>")) {
                auto a = make_node(NodeKind::NamedArg, cur().span);
                a->text = expect_ident();
                expect_op("=>");
                skip_nl();
                a->children.push_back(expr());
                call.children.push_back(std::move(a));
            } else {
                call.children.push_back(expr());
            }
            skip_nl();
            if (accept_punct(",")) continue;
            break;
        }
        expect_punct(")");
    }

    NodePtr index_or_slice(NodePtr base) {
        Span sp = cur().span;
        expect_punct("[");
        skip_nl();
        if (cur().is_op("..")) {
            advance();
            skip_nl();
            expect_punct("]");
            auto s = make_node(NodeKind::Slice, sp);
            s->children.push_back(std::move(base));
            s->children.push_back(nullptr);
            s->children.push_back(nullptr);
            return s;
        }
        auto idx = expr();
        skip_nl();
        expect_punct("]");
        if (idx->kind == NodeKind::Binary && idx->text == "..") {
            auto s = make_node(NodeKind::Slice, sp);
            s->children.push_back(std::move(base));
            s->children.push_back(std::move(idx->children[0]));
            s->children.push_back(std::move(idx->children[1]));
            return s;
        }
        auto n = make_node(NodeKind::Index, sp);
        n->children.push_back(std::move(base));
        n->children.push_back(std::move(idx));
        return n;
    }

    NodePtr primary() {
        Span sp = cur().span;
        switch (cur().kind) {
            case TokenKind::IntLit: {
                auto n = make_node(NodeKind::IntLit, sp);
                n->ival = cur().int_value;
                n->text = cur().text;
                advance();
                return n;
            }
            case TokenKind::RealLit: {
                auto n = make_node(NodeKind::RealLit, sp);
                n->rval = cur().real_value;
                n->text = cur().text;
                advance();
                return n;
            }
            case TokenKind::CharLit: {
                auto n = make_node(NodeKind::CharLit, sp);
                n->ival = cur().int_value;
                n->text = cur().text;
                advance();
                return n;
            }
            case TokenKind::StringLit: {
                if (next().is_punct("(")) {
                    auto n = make_node(NodeKind::Name, sp);
                    n->text = cur().text;
                    n->set(FlagOpName);
                    advance();
                    return n;
                }
                auto n = make_node(NodeKind::StrLit, sp);
                n->text = cur().text;
                advance();
                return n;
            }
            case TokenKind::EnumLit: {
                auto n = make_node(NodeKind::EnumLit, sp);
                n->text = cur().text;
                advance();
                return n;
            }
            case TokenKind::Identifier: {
                auto n = make_node(NodeKind::Name, sp);
                n->text = cur().text;
                advance();
                return n;
            }
            default: break;
        }
        if (cur().is_kw("null")) {
            advance();
            return make_node(NodeKind::NullLit, sp);
        }
        if (cur().is_punct("(")) {
            size_t i = pos_ + 1;
            while (at(i).is(TokenKind::Newline)) ++i;
            if ((at(i).is(TokenKind::Identifier) &&
                 (at(i + 1).is_op("=>") || at(i + 1).is_op("<=="))) ||
                at(i).is_punct(")"))
                return paren_aggregate();
            advance();
            skip_nl();
            auto e = expr();
            skip_nl();
            expect_punct(")");
            return e;
        }
        if (cur().is_punct("[")) return bracket_aggregate();
        if (cur().is_op("|")) {
            advance();
            auto n = make_node(NodeKind::Magnitude, sp);
            n->children.push_back(expr_range());
            expect_op("|");
            return n;
        }
        error("expected expression");
    }

    NodePtr paren_aggregate() {
        Span sp = cur().span;
        expect_punct("(");
        auto agg = make_node(NodeKind::Aggregate, sp);
        agg->set(FlagParenAgg);
        skip_nl();
        if (accept_punct(")")) return agg;
        while (true) {
            skip_nl();
            auto el = make_node(NodeKind::NamedArg, cur().span);
            el->text = expect_ident();
            if (accept_op("<=="))
                el->set(FlagMoveInit);
            else
                expect_op("=>");
            skip_nl();
            el->children.push_back(expr());
            agg->children.push_back(std::move(el));
            skip_nl();
            if (accept_punct(",")) continue;
            break;
        }
        expect_punct(")");
        return agg;
    }

    NodePtr bracket_aggregate() {
        Span sp = cur().span;
        expect_punct("[");
        auto agg = make_node(NodeKind::Aggregate, sp);
        skip_nl();
        if (accept_punct("]")) return agg;
        while (true) {
            skip_nl();
            if (cur().is_kw("for")) {
                agg->children.push_back(comprehension());
            } else {
                auto e = expr();
                if (accept_op("=>")) {
                    auto kv = make_node(NodeKind::NamedArg, e->span);
                    kv->children.push_back(std::move(e));
                    skip_nl();
                    kv->children.push_back(expr());
                    agg->children.push_back(std::move(kv));
                } else {
                    agg->children.push_back(std::move(e));
                }
            }
            skip_nl();
            if (accept_punct(",")) continue;
            break;
        }
        expect_punct("]");
        return agg;
    }

    // [for each E of V {cond} => expr]
    NodePtr comprehension() {
        Span sp = cur().span;
        expect_kw("for");
        expect_kw("each");
        auto n = make_node(NodeKind::Comprehension, sp);
        n->text = expect_ident();
        expect_kw("of");
        n->children.push_back(expr());
        skip_nl();
        if (accept_punct("{")) {
            skip_nl();
            n->children.push_back(expr());
            skip_nl();
            expect_punct("}");
        } else {
            n->children.push_back(nullptr);
        }
        skip_nl();
        expect_op("=>");
        skip_nl();
        n->children.push_back(expr());
        return n;
    }

    const std::vector<Token>& toks_;
    DiagSink& diags_;
    std::string file_;
    size_t pos_ = 0;
    int no_gt_depth_ = 0;
};

}  // namespace

NodePtr parse_unit(const std::vector<Token>& tokens, DiagSink& diags, const std::string& file) {
    Parser p(tokens, diags, file);
    auto u = p.unit();
    u->text = file;  // units carry their source path for later diagnostics
    return u;
}

NodePtr parse_expression(const std::vector<Token>& tokens, DiagSink& diags,
                         const std::string& file) {
    Parser p(tokens, diags, file);
    try {
        return p.expression_entry();
    } catch (SyntaxError&) {
        return nullptr;
    }
}

NodePtr parse_statement(const std::vector<Token>& tokens, DiagSink& diags,
                        const std::string& file) {
    Parser p(tokens, diags, file);
    try {
        return p.statement_entry();
    } catch (SyntaxError&) {
        return nullptr;
    }
}

}  // namespace psl
