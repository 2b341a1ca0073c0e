#include "desugar.hpp"

#include <atomic>

namespace psl {

namespace {

std::atomic<int> g_name_counter{0};

std::string fresh(const char* stem) {
    return "@" + std::string(stem) + std::to_string(++g_name_counter);
}

NodePtr name_ref(const std::string& text, Span sp) {
    auto n = make_node(NodeKind::Name, sp);
    n->text = text;
    return n;
}

NodePtr op_name(const char* op, Span sp) {
    auto n = make_node(NodeKind::Name, sp);
    n->text = op;
    n->set(FlagOpName);
    return n;
}

NodePtr call1(const char* op, NodePtr a, Span sp) {
    auto c = make_node(NodeKind::CallExpr, sp);
    c->children.push_back(op_name(op, sp));
    c->children.push_back(std::move(a));
    return c;
}

NodePtr call2(const char* op, NodePtr a, NodePtr b, Span sp) {
    auto c = make_node(NodeKind::CallExpr, sp);
    c->children.push_back(op_name(op, sp));
    c->children.push_back(std::move(a));
    c->children.push_back(std::move(b));
    return c;
}

NodePtr enum_lit(const char* text, Span sp) {
    auto n = make_node(NodeKind::EnumLit, sp);
    n->text = text;
    return n;
}

bool is_comparison(const Node& n) {
    if (n.kind != NodeKind::Binary) return false;
    const std::string& t = n.text;
    return t == "==" || t == "!=" || t == "<" || t == "<=" || t == ">" || t == ">=";
}

class Rewriter {
public:
    explicit Rewriter(DiagSink& diags) : diags_(diags) {}

    NodePtr walk(NodePtr n) {
        if (!n) return nullptr;
        switch (n->kind) {
            case NodeKind::Binary:
                if (is_comparison(*n)) return comparison(std::move(n));
                break;
            case NodeKind::Index: {
                Span sp = n->span;
                return walk(call2("indexing", std::move(n->children[0]),
                                  std::move(n->children[1]), sp));
            }
            case NodeKind::Slice:
                return slice(std::move(n));
            case NodeKind::Magnitude: {
                Span sp = n->span;
                return walk(call1("magnitude", std::move(n->children[0]), sp));
            }
            case NodeKind::Aggregate:
                if (!n->has(FlagParenAgg)) return bracket_aggregate(std::move(n));
                break;
            case NodeKind::ForEach:
                return element_iterator(std::move(n));
            case NodeKind::InSet: {
                // The right operand stays a literal element list when
                // written as one; only its elements are rewritten.
                n->children[0] = walk(std::move(n->children[0]));
                Node& rhs = *n->children[1];
                if (rhs.kind == NodeKind::Aggregate && !rhs.has(FlagParenAgg)) {
                    for (auto& el : rhs.children) el = walk(std::move(el));
                } else {
                    n->children[1] = walk(std::move(n->children[1]));
                }
                return n;
            }
            default:
                break;
        }
        for (auto& c : n->children) c = walk(std::move(c));
        return n;
    }

private:
    // A == B  ->  (A =? B) in [#equal], and friends.
    NodePtr comparison(NodePtr n) {
        Span sp = n->span;
        auto cmp = call2("=?", std::move(n->children[0]), std::move(n->children[1]), sp);
        auto set = make_node(NodeKind::Aggregate, sp);
        const std::string& op = n->text;
        if (op == "==" || op == "!=") {
            set->children.push_back(enum_lit("#equal", sp));
        } else if (op == "<") {
            set->children.push_back(enum_lit("#less", sp));
        } else if (op == "<=") {
            set->children.push_back(enum_lit("#less", sp));
            set->children.push_back(enum_lit("#equal", sp));
        } else if (op == ">") {
            set->children.push_back(enum_lit("#greater", sp));
        } else {
            set->children.push_back(enum_lit("#greater", sp));
            set->children.push_back(enum_lit("#equal", sp));
        }
        auto in = make_node(NodeKind::InSet, sp);
        if (op == "!=") in->set(FlagNegated);
        in->children.push_back(std::move(cmp));
        in->children.push_back(std::move(set));
        return walk(std::move(in));
    }

    // A[lo..hi] -> "slicing"(A, lo..hi); A[..] fills in A.First..A.Last.
    NodePtr slice(NodePtr n) {
        Span sp = n->span;
        NodePtr base = std::move(n->children[0]);
        NodePtr lo = std::move(n->children[1]);
        NodePtr hi = n->children.size() > 2 ? std::move(n->children[2]) : nullptr;
        if (!lo) {
            auto first = make_node(NodeKind::Attribute, sp);
            first->text = "First";
            first->children.push_back(clone(*base));
            auto last = make_node(NodeKind::Attribute, sp);
            last->text = "Last";
            last->children.push_back(clone(*base));
            lo = std::move(first);
            hi = std::move(last);
        }
        auto range = make_node(NodeKind::Binary, sp);
        range->text = "..";
        range->children.push_back(std::move(lo));
        range->children.push_back(std::move(hi));
        return walk(call2("slicing", std::move(base), std::move(range), sp));
    }

    NodePtr insert_stmt(const std::string& temp, NodePtr elem, Span sp) {
        auto stmt = make_node(NodeKind::CallStmt, sp);
        stmt->children.push_back(call2("|=", name_ref(temp, sp), std::move(elem), sp));
        return stmt;
    }

    // [a, b, ...] -> @T := "[]"(); @T |= a; @T |= b; ...; @T
    NodePtr bracket_aggregate(NodePtr n) {
        Span sp = n->span;
        if (n->children.empty()) {
            auto c = make_node(NodeKind::CallExpr, sp);
            c->children.push_back(op_name("[]", sp));
            return c;
        }
        std::string temp = fresh("T");
        auto block = make_node(NodeKind::ExprBlock, sp);
        auto decl = make_node(NodeKind::VarDecl, sp);
        decl->set(FlagVar);
        decl->text = temp;
        auto empty = make_node(NodeKind::CallExpr, sp);
        empty->children.push_back(op_name("[]", sp));
        decl->children.push_back(nullptr);
        decl->children.push_back(std::move(empty));
        decl->children.push_back(nullptr);
        block->children.push_back(std::move(decl));
        for (auto& el : n->children) {
            if (el->kind == NodeKind::Comprehension) {
                block->children.push_back(comprehension(temp, std::move(el)));
            } else if (el->kind == NodeKind::NamedArg && el->text.empty()) {
                // K => V inserts a key/value pair.
                auto pair = make_node(NodeKind::Aggregate, el->span);
                pair->set(FlagParenAgg);
                pair->text = "Key_Value";
                auto k = make_node(NodeKind::NamedArg, el->span);
                k->text = "Key";
                k->children.push_back(std::move(el->children[0]));
                auto v = make_node(NodeKind::NamedArg, el->span);
                v->text = "Value";
                v->children.push_back(std::move(el->children[1]));
                pair->children.push_back(std::move(k));
                pair->children.push_back(std::move(v));
                block->children.push_back(
                    walk(insert_stmt(temp, std::move(pair), el->span)));
            } else {
                block->children.push_back(walk(insert_stmt(temp, std::move(el), el->span)));
            }
        }
        block->children.push_back(name_ref(temp, sp));
        return block;
    }

    // [for each E of V {cond} => expr] element: a loop inserting the
    // selected values into the temp.
    NodePtr comprehension(const std::string& temp, NodePtr c) {
        Span sp = c->span;
        NodePtr insert = insert_stmt(temp, std::move(c->children[2]), sp);
        NodePtr body;
        if (c->children[1]) {
            auto ifn = make_node(NodeKind::If, sp);
            ifn->children.push_back(std::move(c->children[1]));
            auto thenb = make_node(NodeKind::Block, sp);
            thenb->children.push_back(std::move(insert));
            ifn->children.push_back(std::move(thenb));
            ifn->children.push_back(nullptr);
            body = std::move(ifn);
        } else {
            body = std::move(insert);
        }
        auto loop_body = make_node(NodeKind::Block, sp);
        loop_body->children.push_back(std::move(body));
        auto fe = make_node(NodeKind::ForEach, sp);
        fe->text = c->text;
        fe->children.push_back(std::move(c->children[0]));
        fe->children.push_back(std::move(loop_body));
        return element_iterator(std::move(fe));
    }

    // for each E of C loop Body end loop
    //   ->
    // var @Keys := "index_set"(C)
    // for @K := Remove_Any(@Keys) then Remove_Any(@Keys)
    //     while @K not null loop
    //   ref E => "indexing"(C, @K)
    //   Body
    // end loop
    NodePtr element_iterator(NodePtr n) {
        Span sp = n->span;
        NodePtr container = std::move(n->children[0]);
        std::string keys = fresh("Keys");
        std::string key = fresh("K");

        auto decl = make_node(NodeKind::VarDecl, sp);
        decl->set(FlagVar);
        decl->text = keys;
        decl->children.push_back(nullptr);
        decl->children.push_back(call1("index_set", clone(*container), sp));
        decl->children.push_back(nullptr);

        auto remove_any = [&] {
            auto c = make_node(NodeKind::CallExpr, sp);
            c->children.push_back(name_ref("Remove_Any", sp));
            c->children.push_back(name_ref(keys, sp));
            return c;
        };

        auto loop = make_node(NodeKind::ForThenWhile, sp);
        loop->text = key;
        loop->children.push_back(remove_any());
        loop->children.push_back(remove_any());
        auto cond = make_node(NodeKind::NotNull, sp);
        cond->children.push_back(name_ref(key, sp));
        loop->children.push_back(std::move(cond));

        auto body = make_node(NodeKind::Block, sp);
        auto bind = make_node(NodeKind::RefDecl, sp);
        bind->text = n->text;
        bind->children.push_back(
            call2("indexing", std::move(container), name_ref(key, sp), sp));
        body->children.push_back(std::move(bind));
        body->children.push_back(std::move(n->children[1]));
        loop->children.push_back(std::move(body));

        auto block = make_node(NodeKind::Block, sp);
        block->children.push_back(std::move(decl));
        block->children.push_back(std::move(loop));
        for (auto& c : block->children) c = walk(std::move(c));
        return block;
    }

    DiagSink& diags_;
};

}  // namespace

NodePtr desugar(NodePtr tree, DiagSink& diags) {
    Rewriter r(diags);
    return r.walk(std::move(tree));
}

void reset_generated_names() { g_name_counter = 0; }

}  // namespace psl
