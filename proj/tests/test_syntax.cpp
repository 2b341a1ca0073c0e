#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "lexer.hpp"
#include "parser.hpp"
#include "pretty.hpp"

using namespace psl;

namespace {

std::vector<Token> lex_ok(const std::string& src) {
    DiagSink d;
    auto toks = tokenize(src, d);
    CAPTURE(src);
    REQUIRE(!d.has_errors());
    return toks;
}

NodePtr parse_expr_ok(const std::string& src) {
    DiagSink d;
    auto toks = tokenize(src, d);
    auto e = parse_expression(toks, d);
    CAPTURE(src);
    for (auto& di : d.all()) CAPTURE(di.render());
    REQUIRE(!d.has_errors());
    REQUIRE(e != nullptr);
    return e;
}

NodePtr parse_ok(const std::string& src) {
    DiagSink d;
    auto toks = tokenize(src, d);
    auto u = parse_unit(toks, d);
    CAPTURE(src);
    for (auto& di : d.all()) CAPTURE(di.render());
    REQUIRE(!d.has_errors());
    return u;
}

}  // namespace

TEST_CASE("move lexes as one token") {
    auto t = lex_ok("X <== Y");
    REQUIRE(t.size() == 4);  // X, <==, Y, eof
    CHECK(t[0].kind == TokenKind::Identifier);
    CHECK(t[1].is_op("<=="));
    CHECK(t[2].text == "Y");
}

TEST_CASE("empty input lexes to eof only") {
    auto t = lex_ok("");
    REQUIRE(t.size() == 1);
    CHECK(t[0].kind == TokenKind::EndOfFile);
}

TEST_CASE("radix and escape forms decode") {
    // Independent decode check: 0xFF = 255, 8#77# = 7*8+7 = 63,
    // '\#03_C0#' = 0x3C0.
    auto t = lex_ok("0xFF 8#77# #red '\\#03_C0#'");
    REQUIRE(t.size() == 5);
    CHECK(t[0].kind == TokenKind::IntLit);
    CHECK(t[0].int_value == 255);
    CHECK(t[1].kind == TokenKind::IntLit);
    CHECK(t[1].int_value == 63);
    CHECK(t[2].kind == TokenKind::EnumLit);
    CHECK(t[2].text == "#red");
    CHECK(t[3].kind == TokenKind::CharLit);
    CHECK(t[3].int_value == 0x3C0);
}

TEST_CASE("unterminated literals diagnose with span") {
    DiagSink d;
    tokenize("\"abc", d);
    REQUIRE(d.has_errors());
    CHECK(d.all()[0].code == "LEX_UNTERMINATED");
    CHECK(d.all()[0].span.line == 1);
}

TEST_CASE("longest match over operator concatenations") {
    // `<==` never lexes as `<=` `=` etc.; check random concatenations
    // separated by spaces reproduce their own texts.
    std::vector<std::string> ops = {"<==", "<=>", ":=", "=?", "==", "!=", "<=",
                                    ">=",  "=>",  "..", "||", "::", "->", "**",
                                    "|=",  "+=",  "-=", "+",  "-",  "*",  "/",
                                    "|",   "<",   ">",  "."};
    std::mt19937 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        std::string src;
        std::vector<std::string> picked;
        for (int i = 0; i < 6; ++i) {
            auto& op = ops[rng() % ops.size()];
            picked.push_back(op);
            src += op;
            src += " ";
        }
        auto t = lex_ok(src);
        REQUIRE(t.size() == picked.size() + 1);
        for (size_t i = 0; i < picked.size(); ++i) CHECK(t[i].text == picked[i]);
    }
}

TEST_CASE("diagnostic spans lie within source bounds") {
    DiagSink d;
    std::string src = "var X := $\nvar Y := 'a\n";
    tokenize(src, d);
    REQUIRE(d.has_errors());
    for (auto& di : d.all()) {
        CHECK(di.span.line >= 1);
        CHECK(di.span.line <= 3);
        CHECK(di.span.col >= 1);
    }
}

TEST_CASE("expression precedence ladder") {
    auto e = parse_expr_ok("Hash(Key) mod |T.Backbone|");
    REQUIRE(e->kind == NodeKind::Binary);
    CHECK(e->text == "mod");
    CHECK(e->child(0)->kind == NodeKind::CallExpr);
    CHECK(e->child(1)->kind == NodeKind::Magnitude);
    CHECK(e->child(1)->child(0)->kind == NodeKind::Selected);

    e = parse_expr_ok("-2**63+1 .. +2**63-1");
    REQUIRE(e->kind == NodeKind::Binary);
    CHECK(e->text == "..");
    const Node* lo = e->child(0);
    REQUIRE(lo->kind == NodeKind::Binary);
    CHECK(lo->text == "+");
    CHECK(lo->child(0)->kind == NodeKind::Unary);
    CHECK(lo->child(0)->child(0)->text == "**");
    const Node* hi = e->child(1);
    REQUIRE(hi->kind == NodeKind::Binary);
    CHECK(hi->text == "-");
    CHECK(hi->child(0)->text == "**");

    e = parse_expr_ok("(A =? B) in [#less, #equal]");
    REQUIRE(e->kind == NodeKind::InSet);
    CHECK(e->child(0)->kind == NodeKind::Binary);
    CHECK(e->child(0)->text == "=?");
    CHECK(e->child(1)->kind == NodeKind::Aggregate);
    CHECK(e->child(1)->children.size() == 2);
}

TEST_CASE("chained comparisons rejected") {
    DiagSink d;
    auto toks = tokenize("a < b < c", d);
    auto e = parse_expression(toks, d);
    CHECK(e == nullptr);
    CHECK(d.has_errors());
}

TEST_CASE("empty func parses") {
    auto u = parse_ok("func F() is end func F");
    REQUIRE(u->children.size() == 1);
    const Node& f = *u->children[0];
    CHECK(f.kind == NodeKind::OpDecl);
    CHECK(f.text == "F");
    REQUIRE(f.child(3) != nullptr);
    CHECK(f.child(3)->children.empty());
}

TEST_CASE("missing end is a syntax error") {
    DiagSink d;
    auto toks = tokenize("func F() is return", d);
    parse_unit(toks, d);
    CHECK(d.has_errors());
}

static const char* kLockedBox = R"(
concurrent interface Locked_Box<Content_Type is Assignable<>> is
  func Create(C : optional Content_Type) -> Locked_Box
  func Set_Content(locked var B : Locked_Box; C : optional Content_Type)
  func Content(locked B : Locked_Box) -> optional Content_Type
  func Put(queued var B : Locked_Box; C : Content_Type)
  func Get(queued var B : Locked_Box) -> Content_Type
end interface Locked_Box
)";

TEST_CASE("Locked_Box interface parses with five operations") {
    auto u = parse_ok(kLockedBox);
    REQUIRE(u->children.size() == 1);
    const Node& iface = *u->children[0];
    CHECK(iface.kind == NodeKind::InterfaceDecl);
    CHECK(iface.has(FlagConcurrent));
    size_t ops = 0;
    for (size_t i = 2; i < iface.children.size(); ++i)
        if (iface.children[i]->kind == NodeKind::OpDecl) ++ops;
    CHECK(ops == 5);
    // Mode spellings
    const Node& put = *iface.children[2 + 3];
    CHECK(put.text == "Put");
    CHECK(put.child(0)->children[0]->mode == ParamMode::QueuedVar);
}

static const char* kSearch = R"(
func Search(Root : optional Tree_Node; Desired_Value : Value_Type) -> optional Key_Type is
  for T => Root while T not null loop
    if T.Value == Desired_Value then
      return T.Key
    else
      continue loop with T.Left
      ||
      continue loop with T.Right
    end if
  end loop
  return null
end func Search
)";

static const char* kQuicksortCore = R"(
func Quicksort(var A : Basic_Array<Univ_Integer>) is
  for Arr => A[..] while |Arr| > 1 loop
    if |Arr| == 2 then
      if Arr[Arr.Last] < Arr[Arr.First] then
        Arr[Arr.First] <=> Arr[Arr.Last];
      end if;
    else
      const Mid := Arr[Arr.First + |Arr|/2];
      var Left := Arr.First;
      var Right := Arr.Last;
      until Left > Right loop
        var New_Left := Right+1;
        var New_Right := Left-1;
      then
        for I in Left .. Right forward loop
          if not (Arr[I] < Mid) then
            New_Left := I;
            if Mid < Arr[I] then
              exit loop;
            end if;
          end if;
        end loop;
        ||
        for J in Left .. Right reverse loop
          if not (Mid < Arr[J]) then
            New_Right := J;
            if Arr[J] < Mid then
              exit loop;
            end if;
          end if;
        end loop;
      then
        if New_Left > New_Right then
          Left := New_Left;
          Right := New_Right;
          exit loop;
        end if;
        Arr[New_Left] <=> Arr[New_Right];
        Left := New_Left + 1;
        Right := New_Right - 1;
      end loop;
    then
      continue loop with Arr => Arr[Arr.First .. Right];
    ||
      continue loop with Arr => Arr[Left .. Arr.Last];
    end if;
  end loop;
end func Quicksort;
)";

TEST_CASE("search and quicksort shapes") {
    auto u = parse_ok(kSearch);
    const Node& f = *u->children[0];
    const Node& loop = *f.child(3)->children[0];
    REQUIRE(loop.kind == NodeKind::ForThenWhile);
    CHECK(loop.has(FlagRef));
    CHECK(loop.child(2) != nullptr);  // while filter

    auto q = parse_ok(kQuicksortCore);
    const Node& qf = *q->children[0];
    const Node& qloop = *qf.child(3)->children[0];
    REQUIRE(qloop.kind == NodeKind::ForThenWhile);
    const Node& body = *qloop.child(3);
    // Loop body: if; the else branch is a then-group of three sections.
    REQUIRE(body.children.size() == 1);
    const Node& ifn = *body.children[0];
    REQUIRE(ifn.kind == NodeKind::If);
    const Node& els = *ifn.child(2);
    REQUIRE(els.kind == NodeKind::ThenGroup);
    CHECK(els.children.size() == 2);
    const Node& conts = *els.children[1]->children[0];
    REQUIRE(conts.kind == NodeKind::ParallelGroup);
    CHECK(conts.children.size() == 2);
    CHECK(conts.children[0]->kind == NodeKind::ContinueWith);
    // Middle section of the until loop: parallel scans
    const Node& until_loop = *els.children[0]->children.back();
    REQUIRE(until_loop.kind == NodeKind::LoopUntil);
    const Node& ub = *until_loop.child(1);
    REQUIRE(ub.kind == NodeKind::ThenGroup);
    REQUIRE(ub.children.size() == 3);
    CHECK(ub.children[1]->children[0]->kind == NodeKind::ParallelGroup);
}

TEST_CASE("round trip: parse, pretty, parse is stable") {
    const char* sources[] = {kLockedBox, kSearch, kQuicksortCore,
                             "func F() is end func F"};
    for (auto* src : sources) {
        auto t1 = parse_ok(src);
        auto text = pretty_print(*t1);
        CAPTURE(text);
        auto t2 = parse_ok(text);
        CHECK(structurally_equal(*t1, *t2));
        // Pretty is a fixed point.
        CHECK(pretty_print(*t2) == text);
    }
}

TEST_CASE("aggregates and class aggregates") {
    auto e = parse_expr_ok("[35, 42]");
    REQUIRE(e->kind == NodeKind::Aggregate);
    CHECK(e->children.size() == 2);
    CHECK(pretty_print(*e) == "[35, 42]\n");

    e = parse_expr_ok("(Backbone => [], Count => 0)");
    REQUIRE(e->kind == NodeKind::Aggregate);
    CHECK(e->has(FlagParenAgg));

    e = parse_expr_ok("Node::(Entry <== Old_Elem.Entry, Next <== New_Bucket)");
    REQUIRE(e->kind == NodeKind::Aggregate);
    CHECK(e->text == "Node");
    CHECK(e->children[0]->has(FlagMoveInit));

    e = parse_expr_ok("[for each E of V {E < Mid} => E]");
    REQUIRE(e->kind == NodeKind::Aggregate);
    REQUIRE(e->children[0]->kind == NodeKind::Comprehension);
}

TEST_CASE("slice forms") {
    auto e = parse_expr_ok("A[..]");
    CHECK(e->kind == NodeKind::Slice);
    CHECK(e->child(1) == nullptr);
    e = parse_expr_ok("A[Lo .. Hi]");
    CHECK(e->kind == NodeKind::Slice);
    CHECK(e->child(1) != nullptr);
    e = parse_expr_ok("A[1][2]");
    REQUIRE(e->kind == NodeKind::Index);
    CHECK(e->child(0)->kind == NodeKind::Index);
}

TEST_CASE("map interface parses") {
    const char* map_src = R"(
interface PSL::Containers::Map
  <Key_Type is Hashable<>; Value_Type is Assignable<>> is
  type Pair is Key_Value<Key_Type, Value_Type>
  op "[]"() -> Map
  op "|="(var M: Map; KV: Pair)
  op "|"(M: Map; KV: Pair) -> Map
  op "+="(var M: Map; KV: Pair) is "|="
  op "in"(Key: Key_Type; M: Map) -> Boolean
  op "-="(var M: Map; Key: Key_Type)
  op "index_set"(M: Map) -> Set<Key_Type>
  op "indexing"(ref M: Map; Key: Key_Type) {Key in M} -> ref Value_Type
  func Remove_Any(var M: Map) -> optional Pair
  op "magnitude"(M: Map) -> Univ_Integer
  func Is_Empty(M: Map) -> Boolean
end interface PSL::Containers::Map
)";
    auto u = parse_ok(map_src);
    const Node& m = *u->children[0];
    CHECK(m.text == "PSL::Containers::Map");
    CHECK(m.simple_name() == "Map");
    size_t ops = 0;
    const Node* indexing = nullptr;
    for (size_t i = 2; i < m.children.size(); ++i) {
        if (m.children[i]->kind == NodeKind::OpDecl) {
            ++ops;
            if (m.children[i]->text == "indexing") indexing = m.children[i].get();
        }
    }
    CHECK(ops == 11);
    REQUIRE(indexing != nullptr);
    CHECK(indexing->child(2) != nullptr);  // precondition {Key in M}
    REQUIRE(indexing->child(1) != nullptr);
    CHECK(indexing->child(1)->has(FlagRef));

    // round trip
    auto text = pretty_print(*u);
    DiagSink d;
    auto t2 = parse_unit(tokenize(text, d), d);
    REQUIRE(!d.has_errors());
    CHECK(structurally_equal(*u, *t2));
}

TEST_CASE("integer module default formal") {
    auto u = parse_ok(
        "interface Integer<Range: Countable_Range<Univ_Integer> := -2**63+1 .. +2**63-1> is\n"
        "  op \"from_univ\"(Univ : Univ_Integer) {Univ in Range} -> Integer\n"
        "  op \"to_univ\"(Integer) -> Result : Univ_Integer {Result in Range}\n"
        "  op \"+\"(Left, Right : Integer) -> Integer\n"
        "end interface Integer\n");
    const Node& m = *u->children[0];
    const Node& formal = *m.child(0)->children[0];
    CHECK(formal.kind == NodeKind::FormalValue);
    REQUIRE(formal.child(1) != nullptr);
    CHECK(formal.child(1)->text == "..");
    // to_univ has a named result with postcondition
    const Node* to_univ = m.children[2 + 1].get();
    CHECK(to_univ->child(1)->text == "Result");
    CHECK(to_univ->child(1)->child(1) != nullptr);
}

TEST_CASE("expression function and rename") {
    auto u = parse_ok(
        "class C is\n"
        "exports\n"
        "func Count(T: C) -> Univ_Integer is (T.X)\n"
        "end class C\n");
    const Node& cls = *u->children[0];
    const Node& f = *cls.child(1)->children[0];
    REQUIRE(f.child(3) != nullptr);
    CHECK(f.child(3)->kind == NodeKind::Selected);
}

TEST_CASE("queued body clause parses") {
    auto u = parse_ok(
        "concurrent class Locked_Box is\n"
        "var Content : optional Content_Type\n"
        "exports\n"
        "func Put(queued var B : Locked_Box; C : Content_Type) is\n"
        "  queued until B.Content is null then\n"
        "    B.Content := C\n"
        "end func Put\n"
        "func Get(queued var B : Locked_Box) -> Result : Content_Type is\n"
        "  queued while B.Content is null then\n"
        "    Result <== B.Content\n"
        "end func Get\n"
        "end class Locked_Box\n");
    const Node& cls = *u->children[0];
    const Node& put = *cls.child(1)->children[0];
    REQUIRE(put.child(5) != nullptr);
    CHECK(put.child(5)->kind == NodeKind::IsNull);
    CHECK(!put.has(FlagQueuedWhile));
    const Node& get = *cls.child(1)->children[1];
    CHECK(get.has(FlagQueuedWhile));
}

TEST_CASE("hash table class with local module and for then while") {
    const char* src = R"(
class PSL::Containers::Hash_Table is
  interface Node<> is
    var Entry: KV_Type
    var Next: optional Node
  end interface Node
  var Backbone: Basic_Array<optional Node>
  var Count: Univ_Integer := 0
exports
  op "[]"() -> Hash_Table is
    return (Backbone => [], Count => 0)
  end op "[]"
  op "in"(Key: KV_Type::Key_Type; T: Hash_Table) -> Boolean is
    if T.Count > 0 then
      const H := Hash(Key) mod |T.Backbone|
      for N => T.Backbone[H+1]
        then N.Next while N not null loop
        if Key_Of(N.Entry) == Key then
          return #true
        end if
      end loop
    end if
    return #false
  end op "in"
end class PSL::Containers::Hash_Table
)";
    auto u = parse_ok(src);
    const Node& cls = *u->children[0];
    REQUIRE(cls.child(0)->children.size() == 3);
    CHECK(cls.child(0)->children[0]->kind == NodeKind::InterfaceDecl);
    // round trip
    auto text = pretty_print(*u);
    DiagSink d;
    auto t2 = parse_unit(tokenize(text, d), d);
    REQUIRE(!d.has_errors());
    CHECK(structurally_equal(*u, *t2));
}

TEST_CASE("var decl forms") {
    auto u = parse_ok(
        "func F() is\n"
        "  var Old_Backbone <== HT.Backbone\n"
        "  var Tmp for Big := Create(10, null)\n"
        "  var X: Set<Integer> := []\n"
        "  const Y: Set<Integer> := [35, 42]\n"
        "  var Z := Y\n"
        "end func F\n");
    const Node& body = *u->children[0]->child(3);
    REQUIRE(body.children.size() == 5);
    CHECK(body.children[0]->has(FlagMoveInit));
    CHECK(body.children[1]->child(2) != nullptr);  // for anchor
    CHECK(!body.children[3]->has(FlagVar));
}
