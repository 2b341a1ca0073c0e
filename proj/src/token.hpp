#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "span.hpp"

namespace psl {

enum class TokenKind : uint8_t {
    Identifier,
    IntLit,
    RealLit,
    CharLit,
    StringLit,
    EnumLit,   // #name
    Operator,
    Keyword,
    Punct,     // ( ) [ ] { } , ; : < >
    Newline,
    EndOfFile,
};

struct Token {
    TokenKind kind = TokenKind::EndOfFile;
    std::string text;      // lexeme, normalized (enum lits keep the '#')
    Span span;
    int64_t int_value = 0; // decoded value for IntLit / CharLit (code point)
    double real_value = 0;

    bool is(TokenKind k) const { return kind == k; }
    bool is(TokenKind k, std::string_view t) const { return kind == k && text == t; }
    bool is_kw(std::string_view t) const { return kind == TokenKind::Keyword && text == t; }
    bool is_op(std::string_view t) const { return kind == TokenKind::Operator && text == t; }
    bool is_punct(std::string_view t) const { return kind == TokenKind::Punct && text == t; }
};

const char* token_kind_name(TokenKind k);
bool is_keyword(std::string_view word);

}  // namespace psl
