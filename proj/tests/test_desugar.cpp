#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "desugar.hpp"
#include "lexer.hpp"
#include "parser.hpp"
#include "pretty.hpp"

using namespace psl;

namespace {

NodePtr desugar_expr(const std::string& src) {
    DiagSink d;
    auto toks = tokenize(src, d);
    auto e = parse_expression(toks, d);
    CAPTURE(src);
    REQUIRE(!d.has_errors());
    REQUIRE(e != nullptr);
    return desugar(std::move(e), d);
}

std::string render_expr(const std::string& src) {
    reset_generated_names();
    auto e = desugar_expr(src);
    auto s = pretty_print(*e);
    if (!s.empty() && s.back() == '\n') s.pop_back();
    return s;
}

std::string render_stmt(const std::string& src) {
    reset_generated_names();
    DiagSink d;
    auto toks = tokenize(src, d);
    auto st = parse_statement(toks, d);
    CAPTURE(src);
    REQUIRE(!d.has_errors());
    REQUIRE(st != nullptr);
    st = desugar(std::move(st), d);
    return pretty_print(*st);
}

// True when no sugar form survives. A bracket aggregate is fine only as
// the element list of a membership test.
bool core_clean(const Node* n, bool in_set_rhs = false) {
    if (!n) return true;
    switch (n->kind) {
        case NodeKind::Index:
        case NodeKind::Slice:
        case NodeKind::Magnitude:
        case NodeKind::ForEach:
        case NodeKind::Comprehension:
            return false;
        case NodeKind::Binary:
            if (n->text == "==" || n->text == "!=" || n->text == "<" ||
                n->text == "<=" || n->text == ">" || n->text == ">=")
                return false;
            break;
        case NodeKind::Aggregate:
            if (!n->has(FlagParenAgg) && !in_set_rhs) return false;
            break;
        default:
            break;
    }
    if (n->kind == NodeKind::InSet) {
        return core_clean(n->child(0)) && core_clean(n->child(1), true);
    }
    for (const auto& c : n->children)
        if (!core_clean(c.get())) return false;
    return true;
}

}  // namespace

TEST_CASE("comparison expansions") {
    CHECK(render_expr("A == B") == "(A =? B) in [#equal]");
    CHECK(render_expr("A <= B") == "(A =? B) in [#less, #equal]");
    CHECK(render_expr("A < B") == "(A =? B) in [#less]");
    CHECK(render_expr("A > B") == "(A =? B) in [#greater]");
    CHECK(render_expr("A >= B") == "(A =? B) in [#greater, #equal]");
    CHECK(render_expr("A != B") == "(A =? B) not in [#equal]");
}

TEST_CASE("comparison truth table over the four orderings") {
    // Each desugared comparison evaluated against a stub "=?" that
    // returns a fixed ordering.
    struct Case {
        const char* op;
        bool less, equal, greater, unordered;
    };
    const Case table[] = {
        {"==", false, true, false, false},
        {"!=", true, false, true, true},
        {"<", true, false, false, false},
        {"<=", true, true, false, false},
        {">", false, false, true, false},
        {">=", false, true, true, false},
    };
    const char* orderings[] = {"#less", "#equal", "#greater", "#unordered"};
    for (const auto& c : table) {
        auto e = desugar_expr(std::string("A ") + c.op + " B");
        REQUIRE(e->kind == NodeKind::InSet);
        REQUIRE(e->child(0)->kind == NodeKind::CallExpr);
        CHECK(e->child(0)->child(0)->text == "=?");
        const Node& set = *e->child(1);
        bool expected[4] = {c.less, c.equal, c.greater, c.unordered};
        for (int i = 0; i < 4; ++i) {
            bool member = false;
            for (const auto& el : set.children)
                if (el->text == orderings[i]) member = true;
            bool result = e->has(FlagNegated) ? !member : member;
            CAPTURE(c.op);
            CAPTURE(orderings[i]);
            CHECK(result == expected[i]);
        }
    }
}

TEST_CASE("indexing and slicing") {
    CHECK(render_expr("A[i]") == "\"indexing\"(A, i)");
    CHECK(render_expr("T.Backbone[H+1]") == "\"indexing\"(T.Backbone, H + 1)");
    CHECK(render_expr("A[1][2]") ==
          "\"indexing\"(\"indexing\"(A, 1), 2)");
    CHECK(render_expr("A[..]") == "\"slicing\"(A, A.First .. A.Last)");
    CHECK(render_expr("A[Lo .. Hi]") == "\"slicing\"(A, Lo .. Hi)");
    CHECK(render_expr("Arr[Arr.First .. Right]") ==
          "\"slicing\"(Arr, Arr.First .. Right)");
}

TEST_CASE("magnitude") {
    CHECK(render_expr("|M|") == "\"magnitude\"(M)");
    CHECK(render_expr("|V|/2") == "\"magnitude\"(V) / 2");
    CHECK(render_expr("|[]|") == "\"magnitude\"(\"[]\"())");
}

TEST_CASE("aggregates build through empty plus insert") {
    CHECK(render_expr("[]") == "\"[]\"()");
    CHECK(render_expr("[35, 42]") ==
          "var @T1 := \"[]\"(); @T1 |= 35; @T1 |= 42; @T1");
    CHECK(render_expr("[K => V]") ==
          "var @T1 := \"[]\"(); "
          "@T1 |= Key_Value::(Key => K, Value => V); @T1");
}

TEST_CASE("element iterator expansion") {
    auto s = render_stmt(
        "for each B of T.Backbone loop\n"
        "  F(B)\n"
        "end loop\n");
    CHECK(s ==
          "var @Keys1 := \"index_set\"(T.Backbone)\n"
          "for @K2 := Remove_Any(@Keys1) then Remove_Any(@Keys1)"
          " while @K2 not null loop\n"
          "  ref B => \"indexing\"(T.Backbone, @K2)\n"
          "  F(B)\n"
          "end loop\n");
}

TEST_CASE("comprehension becomes a filtered insertion loop") {
    auto s = render_expr("[for each E of V {E < Mid} => E]");
    CHECK(s ==
          "var @T1 := \"[]\"(); "
          "var @Keys2 := \"index_set\"(V) "
          "for @K3 := Remove_Any(@Keys2) then Remove_Any(@Keys2)"
          " while @K3 not null loop "
          "ref E => \"indexing\"(V, @K3) "
          "if (E =? Mid) in [#less] then "
          "@T1 |= E "
          "end if "
          "end loop; @T1");
}

TEST_CASE("membership right operand stays a literal list") {
    auto e = desugar_expr("X in [#less, #equal]");
    REQUIRE(e->kind == NodeKind::InSet);
    CHECK(e->child(1)->kind == NodeKind::Aggregate);
    // but a non-list right operand is left to resolve to op "in"
    e = desugar_expr("Key in M");
    REQUIRE(e->kind == NodeKind::InSet);
    CHECK(e->child(1)->kind == NodeKind::Name);
    // and elements inside the list are still rewritten
    e = desugar_expr("X in [A[1], B[2]]");
    CHECK(e->child(1)->children[0]->kind == NodeKind::CallExpr);
}

TEST_CASE("assignment targets are rewritten") {
    auto s = render_stmt("Arr[New_Left] <=> Arr[New_Right]\n");
    CHECK(s ==
          "\"indexing\"(Arr, New_Left) <=> \"indexing\"(Arr, New_Right)\n");
    s = render_stmt("A[I] := A[J] + 1\n");
    CHECK(s == "\"indexing\"(A, I) := \"indexing\"(A, J) + 1\n");
}

static const char* kUnits[] = {
    R"(
func Quicksort(var A : Basic_Array<Univ_Integer>) is
  for Arr => A[..] while |Arr| > 1 loop
    if |Arr| == 2 then
      if Arr[Arr.Last] < Arr[Arr.First] then
        Arr[Arr.First] <=> Arr[Arr.Last]
      end if
    else
      const Mid := Arr[Arr.First + |Arr|/2]
      var Left := Arr.First
      var Right := Arr.Last
      until Left > Right loop
        var New_Left := Right+1
        var New_Right := Left-1
      then
        for I in Left .. Right forward loop
          if not (Arr[I] < Mid) then
            New_Left := I
            if Mid < Arr[I] then
              exit loop
            end if
          end if
        end loop
        ||
        for J in Left .. Right reverse loop
          if not (Mid < Arr[J]) then
            New_Right := J
            if Arr[J] < Mid then
              exit loop
            end if
          end if
        end loop
      then
        if New_Left > New_Right then
          Left := New_Left
          Right := New_Right
          exit loop
        end if
        Arr[New_Left] <=> Arr[New_Right]
        Left := New_Left + 1
        Right := New_Right - 1
      end loop
    then
      continue loop with Arr => Arr[Arr.First .. Right]
    ||
      continue loop with Arr => Arr[Left .. Arr.Last]
    end if
  end loop
end func Quicksort
)",
    R"(
class Hash_Table is
  interface Node<> is
    var Entry: KV_Type
    var Next: optional Node
  end interface Node
  var Backbone: Basic_Array<optional Node>
  var Count: Univ_Integer := 0
exports
  op "in"(Key: KV_Type::Key_Type; T: Hash_Table) -> Boolean is
    if T.Count > 0 then
      const H := Hash(Key) mod |T.Backbone|
      for N => T.Backbone[H+1] then N.Next while N not null loop
        if Key_Of(N.Entry) == Key then
          return #true
        end if
      end loop
    end if
    return #false
  end op "in"
  func Dump(T: Hash_Table) is
    for each B of T.Backbone loop
      Println(To_String(Key_Of(B.Entry)))
    end loop
  end func Dump
end class Hash_Table
)",
    R"(
func Qsort(V: Vector<Univ_Integer>) -> Vector<Univ_Integer> is
  if |V| <= 1 then
    return V
  else
    const Mid := V[ |V|/2 ]
    return Qsort( [for each E of V {E < Mid} => E] )
      | [for each E of V {E == Mid} => E]
      | Qsort( [for each E of V {E > Mid} => E] )
  end if
end func Qsort
)",
};

TEST_CASE("no sugar survives in full units") {
    for (auto* src : kUnits) {
        DiagSink d;
        auto u = parse_unit(tokenize(src, d), d);
        CAPTURE(src);
        for (auto& di : d.all()) { CAPTURE(di.render()); }
        REQUIRE(!d.has_errors());
        u = desugar(std::move(u), d);
        CHECK(core_clean(u.get()));
    }
}

TEST_CASE("desugar is idempotent") {
    const char* exprs[] = {
        "A == B", "A[i]", "A[..]", "|V|/2", "[35, 42]",
        "[for each E of V {E < Mid} => E]", "Key in M",
    };
    for (auto* src : exprs) {
        auto once = desugar_expr(src);
        DiagSink d;
        auto twice = desugar(clone(*once), d);
        CAPTURE(src);
        CHECK(structurally_equal(*once, *twice));
    }
    for (auto* src : kUnits) {
        DiagSink d;
        auto u = desugar(parse_unit(tokenize(src, d), d), d);
        REQUIRE(!d.has_errors());
        auto twice = desugar(clone(*u), d);
        CHECK(structurally_equal(*u, *twice));
    }
}

TEST_CASE("generated names never collide with user identifiers") {
    DiagSink d;
    tokenize("var @T1 := 3", d);
    CHECK(d.has_errors());
}
