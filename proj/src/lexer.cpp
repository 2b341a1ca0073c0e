#include "lexer.hpp"

#include <array>
#include <cctype>
#include <unordered_set>

namespace psl {

const char* token_kind_name(TokenKind k) {
    switch (k) {
        case TokenKind::Identifier: return "identifier";
        case TokenKind::IntLit: return "integer literal";
        case TokenKind::RealLit: return "real literal";
        case TokenKind::CharLit: return "character literal";
        case TokenKind::StringLit: return "string literal";
        case TokenKind::EnumLit: return "enumeration literal";
        case TokenKind::Operator: return "operator";
        case TokenKind::Keyword: return "keyword";
        case TokenKind::Punct: return "punctuation";
        case TokenKind::Newline: return "end of line";
        case TokenKind::EndOfFile: return "end of input";
    }
    return "?";
}

bool is_keyword(std::string_view word) {
    static const std::unordered_set<std::string_view> kws = {
        "abstract", "and",    "class",   "concurrent", "const",   "continue",
        "each",     "else",   "elsif",   "end",        "exit",    "exports",
        "extends",  "for",    "forward", "func",       "if",      "implements",
        "in",       "interface", "is",   "locked",     "loop",    "mod",
        "not",      "null",   "of",     "op",          "optional", "or",
        "queued",   "ref",    "return", "reverse",     "then",    "type",
        "until",    "var",    "while",  "with",
    };
    return kws.contains(word);
}

namespace {

class Lexer {
public:
    Lexer(std::string_view src, DiagSink& diags, const std::string& file)
        : src_(src), diags_(diags), file_(file) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == ' ' || c == '\t' || c == '\r') {
                advance();
                continue;
            }
            if (c == '\n') {
                out.push_back(make(TokenKind::Newline, "\n", 1));
                advance_line();
                continue;
            }
            if (c == '/' && peek(1) == '/') {
                while (pos_ < src_.size() && src_[pos_] != '\n') advance();
                continue;
            }
            if (std::isdigit(static_cast<unsigned char>(c))) {
                out.push_back(lex_number());
                continue;
            }
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                out.push_back(lex_word());
                continue;
            }
            switch (c) {
                case '#': out.push_back(lex_enum()); continue;
                case '\'': out.push_back(lex_char()); continue;
                case '"': out.push_back(lex_string()); continue;
                default: break;
            }
            Token t;
            if (lex_operator(t)) {
                out.push_back(t);
                continue;
            }
            diags_.error("LEX_CHAR", std::string("illegal character '") + c + "'", here(1), file_);
            advance();
        }
        out.push_back(make(TokenKind::EndOfFile, "", 0));
        return out;
    }

private:
    char peek(size_t off = 0) const {
        return pos_ + off < src_.size() ? src_[pos_ + off] : '\0';
    }
    void advance() { ++pos_; ++col_; }
    void advance_line() { ++pos_; ++line_; col_ = 1; }
    Span here(uint32_t len) const { return Span{line_, col_, len}; }

    Token make(TokenKind k, std::string text, uint32_t len) const {
        Token t;
        t.kind = k;
        t.text = std::move(text);
        t.span = here(len);
        return t;
    }

    Token lex_word() {
        size_t start = pos_;
        Span sp = here(0);
        while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_') advance();
        std::string text(src_.substr(start, pos_ - start));
        sp.length = static_cast<uint32_t>(text.size());
        Token t;
        t.kind = is_keyword(text) ? TokenKind::Keyword : TokenKind::Identifier;
        t.text = std::move(text);
        t.span = sp;
        return t;
    }

    Token lex_enum() {
        Span sp = here(0);
        advance();  // '#'
        if (!std::isalpha(static_cast<unsigned char>(peek())) && peek() != '_') {
            diags_.error("LEX_CHAR", "expected identifier after '#'", here(1), file_);
            Token t = make(TokenKind::EnumLit, "#", 1);
            return t;
        }
        size_t start = pos_;
        while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_') advance();
        std::string name(src_.substr(start, pos_ - start));
        Token t;
        t.kind = TokenKind::EnumLit;
        t.text = "#" + name;
        sp.length = static_cast<uint32_t>(t.text.size());
        t.span = sp;
        return t;
    }

    static int digit_value(char c) {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    }

    // Decimal, 0x hex, and base#digits# forms; '_' allowed between digits.
    Token lex_number() {
        Span sp = here(0);
        size_t start = pos_;
        if (peek() == '0' && (peek(1) == 'x' || peek(1) == 'X')) {
            advance();
            advance();
            int64_t v = 0;
            while (digit_value(peek()) >= 0 || peek() == '_') {
                if (peek() != '_') v = v * 16 + digit_value(peek());
                advance();
            }
            Token t;
            t.kind = TokenKind::IntLit;
            t.text = std::string(src_.substr(start, pos_ - start));
            t.int_value = v;
            sp.length = static_cast<uint32_t>(t.text.size());
            t.span = sp;
            return t;
        }
        int64_t v = 0;
        while (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '_') {
            if (peek() != '_') v = v * 10 + (peek() - '0');
            advance();
        }
        if (peek() == '#') {
            // base#digits#
            int base = static_cast<int>(v);
            advance();
            int64_t bv = 0;
            bool ok = base >= 2 && base <= 16;
            while (digit_value(peek()) >= 0 || peek() == '_') {
                if (peek() != '_') {
                    int d = digit_value(peek());
                    if (d >= base) ok = false;
                    bv = bv * base + d;
                }
                advance();
            }
            if (peek() == '#')
                advance();
            else
                ok = false;
            if (!ok) diags_.error("LEX_NUM", "malformed based literal", sp, file_);
            Token t;
            t.kind = TokenKind::IntLit;
            t.text = std::string(src_.substr(start, pos_ - start));
            t.int_value = bv;
            sp.length = static_cast<uint32_t>(t.text.size());
            t.span = sp;
            return t;
        }
        if (peek() == '.' && std::isdigit(static_cast<unsigned char>(peek(1)))) {
            advance();  // '.'
            while (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '_') advance();
            if (peek() == 'E' || peek() == 'e') {
                advance();
                if (peek() == '+' || peek() == '-') advance();
                while (std::isdigit(static_cast<unsigned char>(peek()))) advance();
            }
            Token t;
            t.kind = TokenKind::RealLit;
            t.text = std::string(src_.substr(start, pos_ - start));
            std::string digits;
            for (char c : t.text)
                if (c != '_') digits += c;
            t.real_value = std::stod(digits);
            sp.length = static_cast<uint32_t>(t.text.size());
            t.span = sp;
            return t;
        }
        Token t;
        t.kind = TokenKind::IntLit;
        t.text = std::string(src_.substr(start, pos_ - start));
        t.int_value = v;
        sp.length = static_cast<uint32_t>(t.text.size());
        t.span = sp;
        return t;
    }

    // Shared by char and string literals; returns decoded code point.
    // Handles \n \t \r \\ \' \" \0 and the \#hex_digits# Unicode form.
    bool lex_escape(int64_t& out) {
        advance();  // backslash
        char c = peek();
        switch (c) {
            case 'n': out = '\n'; advance(); return true;
            case 't': out = '\t'; advance(); return true;
            case 'r': out = '\r'; advance(); return true;
            case '0': out = 0; advance(); return true;
            case '\\': case '\'': case '"': out = c; advance(); return true;
            case '#': {
                advance();
                int64_t v = 0;
                bool any = false;
                while (digit_value(peek()) >= 0 || peek() == '_') {
                    if (peek() != '_') {
                        v = v * 16 + digit_value(peek());
                        any = true;
                    }
                    advance();
                }
                if (peek() != '#' || !any) return false;
                advance();
                out = v;
                return true;
            }
            default: return false;
        }
    }

    static void append_utf8(std::string& s, int64_t cp) {
        if (cp < 0x80) {
            s += static_cast<char>(cp);
        } else if (cp < 0x800) {
            s += static_cast<char>(0xC0 | (cp >> 6));
            s += static_cast<char>(0x80 | (cp & 0x3F));
        } else if (cp < 0x10000) {
            s += static_cast<char>(0xE0 | (cp >> 12));
            s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
            s += static_cast<char>(0x80 | (cp & 0x3F));
        } else {
            s += static_cast<char>(0xF0 | (cp >> 18));
            s += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
            s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
            s += static_cast<char>(0x80 | (cp & 0x3F));
        }
    }

    Token lex_char() {
        Span sp = here(0);
        advance();  // opening quote
        int64_t cp = 0;
        if (peek() == '\\') {
            if (!lex_escape(cp)) {
                diags_.error("LEX_ESCAPE", "bad escape in character literal", sp, file_);
            }
        } else if (peek() == '\0' || peek() == '\n') {
            diags_.error("LEX_UNTERMINATED", "unterminated character literal", sp, file_);
            Token t = make(TokenKind::CharLit, "", 1);
            t.span = sp;
            return t;
        } else {
            cp = static_cast<unsigned char>(peek());
            advance();
        }
        if (peek() == '\'') {
            advance();
        } else {
            diags_.error("LEX_UNTERMINATED", "unterminated character literal", sp, file_);
        }
        Token t;
        t.kind = TokenKind::CharLit;
        append_utf8(t.text, cp);
        t.int_value = cp;
        t.span = sp;
        return t;
    }

    Token lex_string() {
        Span sp = here(0);
        advance();  // opening quote
        std::string value;
        while (true) {
            char c = peek();
            if (c == '\0' || c == '\n') {
                diags_.error("LEX_UNTERMINATED", "unterminated string literal", sp, file_);
                break;
            }
            if (c == '"') {
                advance();
                break;
            }
            if (c == '\\') {
                int64_t cp = 0;
                if (!lex_escape(cp)) {
                    diags_.error("LEX_ESCAPE", "bad escape in string literal", sp, file_);
                    advance();
                    continue;
                }
                append_utf8(value, cp);
                continue;
            }
            value += c;
            advance();
        }
        Token t;
        t.kind = TokenKind::StringLit;
        t.text = std::move(value);
        t.span = sp;
        return t;
    }

    // Multi-character operators first (longest match).
    bool lex_operator(Token& out) {
        static const std::array<std::string_view, 17> multi = {
            "<==", "<=>", ":=", "=?", "==", "!=", "<=", ">=", "=>",
            "..",  "||",  "::", "->", "**", "|=", "+=", "-=",
        };
        std::string_view rest = src_.substr(pos_);
        for (auto op : multi) {
            if (rest.substr(0, op.size()) == op) {
                out = make(TokenKind::Operator, std::string(op), static_cast<uint32_t>(op.size()));
                for (size_t i = 0; i < op.size(); ++i) advance();
                return true;
            }
        }
        char c = peek();
        switch (c) {
            case '+': case '-': case '*': case '/': case '|': case '<': case '>': case '.':
                out = make(TokenKind::Operator, std::string(1, c), 1);
                advance();
                return true;
            case '(': case ')': case '[': case ']': case '{': case '}':
            case ',': case ';': case ':':
                out = make(TokenKind::Punct, std::string(1, c), 1);
                advance();
                return true;
            default:
                return false;
        }
    }

    std::string_view src_;
    DiagSink& diags_;
    std::string file_;
    size_t pos_ = 0;
    uint32_t line_ = 1;
    uint32_t col_ = 1;
};

}  // namespace

std::vector<Token> tokenize(std::string_view source, DiagSink& diags, const std::string& filename) {
    return Lexer(source, diags, filename).run();
}

}  // namespace psl
