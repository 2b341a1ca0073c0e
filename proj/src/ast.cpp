#include "ast.hpp"

namespace psl {

NodePtr clone(const Node& n) {
    auto out = make_node(n.kind, n.span);
    out->text = n.text;
    out->ival = n.ival;
    out->rval = n.rval;
    out->flags = n.flags;
    out->mode = n.mode;
    out->children.reserve(n.children.size());
    for (const auto& c : n.children) out->children.push_back(c ? clone(*c) : nullptr);
    return out;
}

bool structurally_equal(const Node& a, const Node& b) {
    if (a.kind != b.kind || a.text != b.text || a.ival != b.ival || a.rval != b.rval ||
        a.flags != b.flags || a.mode != b.mode || a.children.size() != b.children.size())
        return false;
    for (size_t i = 0; i < a.children.size(); ++i) {
        const Node* ca = a.children[i].get();
        const Node* cb = b.children[i].get();
        if ((ca == nullptr) != (cb == nullptr)) return false;
        if (ca && !structurally_equal(*ca, *cb)) return false;
    }
    return true;
}

}  // namespace psl
