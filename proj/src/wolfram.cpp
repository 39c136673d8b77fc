#include "ecalab/complexity.hpp"

#include <json.hpp>

#include <array>

namespace ecalab::complexity {

namespace detail {
extern const char* const wolfram_table_json;
}

namespace {

struct Table {
    std::string version;
    std::array<WolframClass, 256> by_rule{};
};

Table load_table() {
    const auto doc = nlohmann::json::parse(detail::wolfram_table_json);
    Table table;
    table.version = doc.at("version").get<std::string>();
    std::array<bool, 256> seen{};
    for (const auto& [name, rules] : doc.at("classes").items()) {
        const WolframClass cls = parse_wolfram_class(name);
        for (int code : rules) {
            const auto rule = eca::RuleId::from_int(code);
            if (eca::canonical(rule) != rule)
                throw Error(ErrorKind::format_error, "wolfram table key " + std::to_string(code) + " is not canonical");
            if (seen[rule.code()]) throw Error(ErrorKind::format_error, "duplicate wolfram table key");
            seen[rule.code()] = true;
            table.by_rule[rule.code()] = cls;
        }
    }
    for (unsigned code = 0; code < 256; ++code) {
        const eca::RuleId canon = eca::canonical(eca::RuleId(static_cast<std::uint8_t>(code)));
        if (!seen[canon.code()])
            throw Error(ErrorKind::format_error, "wolfram table misses class of rule " + std::to_string(code));
        table.by_rule[code] = table.by_rule[canon.code()];
    }
    return table;
}

const Table& table() {
    static const Table t = load_table();
    return t;
}

}  // namespace

const char* to_string(WolframClass c) noexcept {
    switch (c) {
    case WolframClass::I: return "I";
    case WolframClass::II: return "II";
    case WolframClass::III: return "III";
    case WolframClass::IV: return "IV";
    }
    return "?";
}

WolframClass parse_wolfram_class(std::string_view text) {
    if (text == "I") return WolframClass::I;
    if (text == "II") return WolframClass::II;
    if (text == "III") return WolframClass::III;
    if (text == "IV") return WolframClass::IV;
    throw Error(ErrorKind::invalid_input, "unknown wolfram class '" + std::string(text) + "'");
}

WolframClass wolfram_class(eca::RuleId rule) { return table().by_rule[rule.code()]; }

std::string wolfram_table_version() { return table().version; }

}  // namespace ecalab::complexity
