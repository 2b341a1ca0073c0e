#include "pretty.hpp"

#include <unordered_map>

namespace psl {

namespace {

int binop_prec(const std::string& op) {
    static const std::unordered_map<std::string, int> prec = {
        {"or", 1},  {"and", 2},
        {"==", 4},  {"!=", 4}, {"<", 4},  {"<=", 4}, {">", 4}, {">=", 4}, {"=?", 4},
        {"|", 5},   {"..", 6},
        {"+", 7},   {"-", 7},
        {"*", 8},   {"/", 8},  {"mod", 8},
        {"**", 10},
    };
    auto it = prec.find(op);
    return it == prec.end() ? 11 : it->second;
}

bool is_infix_op_name(const std::string& name) {
    return binop_prec(name) < 11 || name == "=?";
}

class Printer {
public:
    std::string run(const Node& n) {
        node(n, 0);
        return std::move(out_);
    }

private:
    void emit(std::string_view s) { out_ += s; }
    void line(int indent) {
        out_ += "\n";
        out_.append(static_cast<size_t>(indent) * 2, ' ');
    }

    static std::string quoted(const std::string& s) { return "\"" + s + "\""; }

    static std::string escape_string(const std::string& s) {
        std::string r;
        for (char c : s) {
            switch (c) {
                case '\n': r += "\\n"; break;
                case '\t': r += "\\t"; break;
                case '\r': r += "\\r"; break;
                case '\\': r += "\\\\"; break;
                case '"': r += "\\\""; break;
                default: r += c;
            }
        }
        return r;
    }

    // One statement rendered on a single line, inner newlines collapsed.
    static std::string flatten_stmt(const Node& s) {
        Printer sub;
        std::string text = sub.run(s);
        std::string flat;
        size_t i = 0;
        while (i < text.size()) {
            if (text[i] == '\n') {
                while (i < text.size() && (text[i] == '\n' || text[i] == ' ')) ++i;
                if (!flat.empty() && i < text.size()) flat += ' ';
                continue;
            }
            flat += text[i++];
        }
        return flat;
    }

    int expr_prec(const Node& e) {
        switch (e.kind) {
            case NodeKind::Binary: return binop_prec(e.text);
            case NodeKind::ExprBlock: return 0;
            case NodeKind::InSet:
            case NodeKind::IsNull:
            case NodeKind::NotNull: return 3;
            case NodeKind::Unary: return 9;
            case NodeKind::CallExpr: {
                const Node* callee = e.child(0);
                if (callee && callee->has(FlagOpName) && is_infix_op_name(callee->text) &&
                    e.children.size() == 3)
                    return 12;  // rendered with its own parentheses
                return 11;
            }
            default: return 12;
        }
    }

    void expr_child(const Node& e, int min_prec) {
        if (expr_prec(e) < min_prec) {
            emit("(");
            expr(e);
            emit(")");
        } else {
            expr(e);
        }
    }

    void expr(const Node& e) {
        switch (e.kind) {
            case NodeKind::Name:
                emit(e.has(FlagOpName) ? quoted(e.text) : e.text);
                return;
            case NodeKind::Qualified:
                emit(e.child(0)->text);
                emit("::");
                emit(e.text);
                return;
            case NodeKind::Selected:
                expr_child(*e.child(0), 11);
                emit(".");
                emit(e.text);
                return;
            case NodeKind::Attribute:
                expr_child(*e.child(0), 11);
                emit(".");
                emit(e.text);
                return;
            case NodeKind::Index:
                expr_child(*e.child(0), 11);
                emit("[");
                expr(*e.child(1));
                emit("]");
                return;
            case NodeKind::Slice:
                expr_child(*e.child(0), 11);
                emit("[");
                if (e.child(1)) {
                    expr(*e.child(1));
                    emit(" .. ");
                    expr(*e.child(2));
                } else {
                    emit("..");
                }
                emit("]");
                return;
            case NodeKind::CallExpr: {
                const Node& callee = *e.child(0);
                if (callee.has(FlagOpName) && is_infix_op_name(callee.text) &&
                    e.children.size() == 3) {
                    // Binary operator call rendered infix, parenthesized:
                    // (A =? B)
                    emit("(");
                    expr(*e.child(1));
                    emit(" ");
                    emit(callee.text);
                    emit(" ");
                    expr(*e.child(2));
                    emit(")");
                    return;
                }
                expr(callee);
                emit("(");
                args(e, 1);
                emit(")");
                return;
            }
            case NodeKind::Aggregate: {
                if (e.has(FlagParenAgg)) {
                    if (!e.text.empty()) {
                        emit(e.text);
                        emit("::");
                    }
                    emit("(");
                    args(e, 0);
                    emit(")");
                } else {
                    emit("[");
                    args(e, 0);
                    emit("]");
                }
                return;
            }
            case NodeKind::NamedArg:
                if (e.text.empty()) {
                    expr(*e.child(0));
                    emit(" => ");
                    expr(*e.child(1));
                } else {
                    emit(e.text);
                    emit(e.has(FlagMoveInit) ? " <== " : " => ");
                    expr(*e.child(0));
                }
                return;
            case NodeKind::Comprehension:
                emit("for each ");
                emit(e.text);
                emit(" of ");
                expr(*e.child(0));
                if (e.child(1)) {
                    emit(" {");
                    expr(*e.child(1));
                    emit("}");
                }
                emit(" => ");
                expr(*e.child(2));
                return;
            case NodeKind::IntLit:
                emit(std::to_string(e.ival));
                return;
            case NodeKind::RealLit:
                emit(e.text.empty() ? std::to_string(e.rval) : e.text);
                return;
            case NodeKind::CharLit: {
                if (e.ival == '\n')
                    emit("'\\n'");
                else if (e.ival == '\t')
                    emit("'\\t'");
                else if (e.ival == '\\')
                    emit("'\\\\'");
                else if (e.ival == '\'')
                    emit("'\\''");
                else if (e.ival >= 0x20 && e.ival < 0x7F) {
                    emit("'");
                    emit(std::string(1, static_cast<char>(e.ival)));
                    emit("'");
                } else {
                    char buf[32];
                    snprintf(buf, sizeof buf, "'\\#%llX#'",
                             static_cast<unsigned long long>(e.ival));
                    emit(buf);
                }
                return;
            }
            case NodeKind::StrLit:
                emit("\"");
                emit(escape_string(e.text));
                emit("\"");
                return;
            case NodeKind::EnumLit:
                emit(e.text);
                return;
            case NodeKind::NullLit:
                emit("null");
                return;
            case NodeKind::Binary: {
                int p = binop_prec(e.text);
                // Left operand at this level, right operand one tighter
                // (left associative); ** is right associative.
                bool right_assoc = e.text == "**";
                expr_child(*e.child(0), right_assoc ? p + 1 : p);
                if (e.text == "..") {
                    emit(" .. ");
                } else {
                    emit(" ");
                    emit(e.text);
                    emit(" ");
                }
                expr_child(*e.child(1), right_assoc ? p : p + 1);
                return;
            }
            case NodeKind::Unary:
                emit(e.text);
                if (e.text == "not") emit(" ");
                expr_child(*e.child(0), 9);
                return;
            case NodeKind::Magnitude:
                emit("|");
                expr(*e.child(0));
                emit("|");
                return;
            case NodeKind::InSet:
                expr_child(*e.child(0), 4);
                emit(e.has(FlagNegated) ? " not in " : " in ");
                expr_child(*e.child(1), 4);
                return;
            case NodeKind::IsNull:
                expr_child(*e.child(0), 4);
                emit(" is null");
                return;
            case NodeKind::NotNull:
                expr_child(*e.child(0), 4);
                emit(" not null");
                return;
            case NodeKind::TypeRef:
                type_ref(e);
                return;
            case NodeKind::ExprBlock: {
                // Statement sequence yielding its last child: rendered
                // flat, joined with "; ".
                for (size_t i = 0; i < e.children.size(); ++i) {
                    if (i > 0) emit("; ");
                    if (i + 1 == e.children.size()) {
                        expr(*e.children[i]);
                    } else {
                        emit(flatten_stmt(*e.children[i]));
                    }
                }
                return;
            }
            default:
                emit("<?expr?>");
                return;
        }
    }

    void args(const Node& n, size_t from) {
        for (size_t i = from; i < n.children.size(); ++i) {
            if (i > from) emit(", ");
            expr_child(*n.children[i], 1);
        }
    }

    void type_ref(const Node& t) {
        if (t.has(FlagOptional)) emit("optional ");
        emit(t.text);
        if (t.children.empty() && t.has(FlagAngles)) {
            emit("<>");
        } else if (!t.children.empty()) {
            emit("<");
            args(t, 0);
            emit(">");
        }
    }

    void stmt_list(const Node& body, int indent) {
        if (body.kind == NodeKind::ThenGroup) {
            for (size_t i = 0; i < body.children.size(); ++i) {
                if (i > 0) {
                    line(indent - 1);
                    emit("then");
                }
                stmt_list(*body.children[i], indent);
            }
            return;
        }
        for (const auto& s : body.children) {
            node(*s, indent);
        }
    }

    void node(const Node& n, int indent) {
        switch (n.kind) {
            case NodeKind::Unit:
                for (const auto& c : n.children) node(*c, indent);
                return;
            case NodeKind::InterfaceDecl: {
                line(indent);
                if (n.has(FlagAbstract)) emit("abstract ");
                if (n.has(FlagConcurrent)) emit("concurrent ");
                emit("interface ");
                emit(n.text);
                const Node& formals = *n.child(0);
                emit("<");
                for (size_t i = 0; i < formals.children.size(); ++i) {
                    if (i > 0) emit("; ");
                    formal(*formals.children[i]);
                }
                emit(">");
                const Node& impls = *n.child(1);
                if (!impls.children.empty()) {
                    line(indent + 1);
                    emit("implements ");
                    for (size_t i = 0; i < impls.children.size(); ++i) {
                        if (i > 0) emit(", ");
                        type_ref(*impls.children[i]);
                    }
                }
                emit(" is");
                for (size_t i = 2; i < n.children.size(); ++i) node(*n.children[i], indent + 1);
                line(indent);
                emit("end interface ");
                emit(n.text);
                return;
            }
            case NodeKind::ClassDecl: {
                line(indent);
                if (n.has(FlagConcurrent)) emit("concurrent ");
                emit("class ");
                emit(n.text);
                emit(" is");
                for (const auto& c : n.child(0)->children) node(*c, indent + 1);
                line(indent);
                emit("exports");
                for (const auto& c : n.child(1)->children) node(*c, indent + 1);
                line(indent);
                emit("end class ");
                emit(n.text);
                return;
            }
            case NodeKind::TypeDecl:
                line(indent);
                emit("type ");
                emit(n.text);
                emit(" is ");
                type_ref(*n.child(0));
                return;
            case NodeKind::ComponentDecl:
                line(indent);
                emit(n.has(FlagVar) ? "var " : "const ");
                emit(n.text);
                emit(": ");
                type_ref(*n.child(0));
                if (n.child(1)) {
                    emit(" := ");
                    expr(*n.child(1));
                }
                return;
            case NodeKind::OpDecl: {
                line(indent);
                bool is_op = n.has(FlagIsOp);
                emit(is_op ? "op " : "func ");
                emit(is_op ? quoted(n.text) : n.text);
                emit("(");
                const Node& params = *n.child(0);
                for (size_t i = 0; i < params.children.size(); ++i) {
                    if (i > 0) emit("; ");
                    param(*params.children[i]);
                }
                emit(")");
                if (n.child(2)) {
                    emit(" {");
                    expr(*n.child(2));
                    emit("}");
                }
                if (n.child(1)) {
                    emit(" -> ");
                    const Node& r = *n.child(1);
                    if (!r.text.empty()) {
                        emit(r.text);
                        emit(" : ");
                    }
                    if (r.has(FlagRef)) emit("ref ");
                    if (r.has(FlagOptional)) emit("optional ");
                    type_ref(*r.child(0));
                    if (r.child(1)) {
                        emit(" {");
                        expr(*r.child(1));
                        emit("}");
                    }
                }
                if (n.child(4)) {
                    emit(" is ");
                    const Node& rn = *n.child(4);
                    emit(rn.has(FlagOpName) ? quoted(rn.text) : rn.text);
                    return;
                }
                if (const Node* body = n.child(3)) {
                    if (body->kind != NodeKind::Block && body->kind != NodeKind::ThenGroup) {
                        // expression function
                        emit(" is (");
                        expr(*body);
                        emit(")");
                        return;
                    }
                    emit(" is");
                    if (n.child(5)) {
                        line(indent + 1);
                        emit(n.has(FlagQueuedWhile) ? "queued while " : "queued until ");
                        expr(*n.child(5));
                        emit(" then");
                        stmt_list(*body, indent + 2);
                    } else {
                        stmt_list(*body, indent + 1);
                    }
                    line(indent);
                    emit("end ");
                    emit(is_op ? "op " : "func ");
                    emit(is_op ? quoted(n.text) : n.text);
                }
                return;
            }
            case NodeKind::Block:
            case NodeKind::ThenGroup:
                stmt_list(n, indent);
                return;
            case NodeKind::ParallelGroup:
                for (size_t i = 0; i < n.children.size(); ++i) {
                    if (i > 0) {
                        line(indent);
                        emit("||");
                    }
                    node(*n.children[i], indent);
                }
                return;
            case NodeKind::VarDecl:
                line(indent);
                emit(n.has(FlagVar) ? "var " : "const ");
                emit(n.text);
                if (n.child(2)) {
                    emit(" for ");
                    expr(*n.child(2));
                }
                if (n.child(0)) {
                    emit(": ");
                    type_ref(*n.child(0));
                }
                if (n.child(1)) {
                    emit(n.has(FlagMoveInit) ? " <== " : " := ");
                    expr(*n.child(1));
                }
                return;
            case NodeKind::RefDecl:
                line(indent);
                emit("ref ");
                emit(n.text);
                emit(" => ");
                expr(*n.child(0));
                return;
            case NodeKind::Assign:
            case NodeKind::Move:
            case NodeKind::Swap:
                line(indent);
                expr(*n.child(0));
                emit(n.kind == NodeKind::Assign ? " := "
                     : n.kind == NodeKind::Move ? " <== "
                                                : " <=> ");
                expr(*n.child(1));
                return;
            case NodeKind::CallStmt: {
                const Node& call = *n.child(0);
                const Node* callee = call.child(0);
                // Insert operators read better in statement form: M |= X
                if (callee && callee->has(FlagOpName) && call.children.size() == 3 &&
                    (callee->text == "|=" || callee->text == "+=" || callee->text == "-=")) {
                    line(indent);
                    expr(*call.child(1));
                    emit(" ");
                    emit(callee->text);
                    emit(" ");
                    expr(*call.child(2));
                    return;
                }
                line(indent);
                expr(call);
                return;
            }
            case NodeKind::Return:
                line(indent);
                emit("return");
                if (n.child(0)) {
                    emit(" ");
                    expr(*n.child(0));
                }
                return;
            case NodeKind::ExitLoop:
                line(indent);
                emit("exit loop");
                return;
            case NodeKind::ContinueWith:
                line(indent);
                emit("continue loop");
                if (!n.children.empty()) {
                    emit(" with ");
                    for (size_t i = 0; i < n.children.size(); ++i) {
                        if (i > 0) emit(", ");
                        expr(*n.children[i]);
                    }
                }
                return;
            case NodeKind::If: {
                line(indent);
                emit("if ");
                const Node* p = &n;
                while (true) {
                    expr(*p->child(0));
                    emit(" then");
                    stmt_list(*p->child(1), indent + 1);
                    const Node* els = p->child(2);
                    if (els && els->kind == NodeKind::If) {
                        line(indent);
                        emit("elsif ");
                        p = els;
                        continue;
                    }
                    if (els) {
                        line(indent);
                        emit("else");
                        stmt_list(*els, indent + 1);
                    }
                    break;
                }
                line(indent);
                emit("end if");
                return;
            }
            case NodeKind::LoopUntil:
                line(indent);
                emit("until ");
                expr(*n.child(0));
                emit(" loop");
                stmt_list(*n.child(1), indent + 1);
                line(indent);
                emit("end loop");
                return;
            case NodeKind::ForThenWhile:
                line(indent);
                emit("for ");
                emit(n.text);
                emit(n.has(FlagRef) ? " => " : " := ");
                expr(*n.child(0));
                if (n.child(1)) {
                    emit(" then ");
                    expr(*n.child(1));
                }
                if (n.child(2)) {
                    emit(" while ");
                    expr(*n.child(2));
                }
                emit(" loop");
                stmt_list(*n.child(3), indent + 1);
                line(indent);
                emit("end loop");
                return;
            case NodeKind::ForInRange:
                line(indent);
                emit("for ");
                emit(n.text);
                emit(" in ");
                expr(*n.child(0));
                emit(n.has(FlagReverse) ? " reverse" : " forward");
                emit(" loop");
                stmt_list(*n.child(1), indent + 1);
                line(indent);
                emit("end loop");
                return;
            case NodeKind::ForEach:
                line(indent);
                emit("for each ");
                emit(n.text);
                emit(" of ");
                expr(*n.child(0));
                emit(" loop");
                stmt_list(*n.child(1), indent + 1);
                line(indent);
                emit("end loop");
                return;
            default:
                line(indent);
                expr(n);
                return;
        }
    }

    void formal(const Node& f) {
        emit(f.text);
        if (f.kind == NodeKind::FormalType) {
            emit(" is ");
            type_ref(*f.child(0));
        } else {
            emit(": ");
            type_ref(*f.child(0));
            if (f.child(1)) {
                emit(" := ");
                expr(*f.child(1));
            }
        }
    }

    void param(const Node& p) {
        switch (p.mode) {
            case ParamMode::ReadOnly: break;
            case ParamMode::Var: emit("var "); break;
            case ParamMode::Ref: emit("ref "); break;
            case ParamMode::RefVar: emit("ref var "); break;
            case ParamMode::Locked: emit("locked "); break;
            case ParamMode::LockedVar: emit("locked var "); break;
            case ParamMode::Queued: emit("queued "); break;
            case ParamMode::QueuedVar: emit("queued var "); break;
        }
        emit(p.text);
        emit(": ");
        if (p.has(FlagOptional)) emit("optional ");
        type_ref(*p.child(0));
    }

    std::string out_;
};

}  // namespace

std::string pretty_print(const Node& node) {
    Printer p;
    std::string s = p.run(node);
    // Trees rooted at declarations/statements start with a newline.
    if (!s.empty() && s[0] == '\n') s.erase(0, 1);
    s += "\n";
    return s;
}

}  // namespace psl
