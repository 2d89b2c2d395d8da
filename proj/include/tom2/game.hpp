// game.hpp -- cards, piles, sorting rules and the canonical enumerations.

#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tom2/error.hpp"

namespace tom2 {

using json = nlohmann::json;

inline constexpr int kNumCards = 27;
inline constexpr int kNumRules = 18;
inline constexpr int kNumPiles = 3;
inline constexpr int kNumDimensions = 3;
inline constexpr int kNumValues = 9;      // 3 dimensions x 3 values
inline constexpr int kNumAssertions = 27; // 9 values x 3 piles

enum class Color : std::uint8_t { Red, Blue, Green };
enum class Shape : std::uint8_t { Diamond, Oval, Squiggle };
enum class Count : std::uint8_t { One, Two, Three };
enum class Dimension : std::uint8_t { Color, Shape, Count };
enum class Pile : std::uint8_t { Pile1, Pile2, Pile3 };

inline constexpr std::array<std::string_view, 3> kColorNames{"Red", "Blue", "Green"};
inline constexpr std::array<std::string_view, 3> kShapeNames{"Diamond", "Oval", "Squiggle"};
inline constexpr std::array<std::string_view, 3> kCountNames{"One", "Two", "Three"};
inline constexpr std::array<std::string_view, 3> kDimensionNames{"Color", "Shape", "Count"};

constexpr int index(Color c) { return static_cast<int>(c); }
constexpr int index(Shape s) { return static_cast<int>(s); }
constexpr int index(Count n) { return static_cast<int>(n); }
constexpr int index(Dimension d) { return static_cast<int>(d); }
constexpr int index(Pile p) { return static_cast<int>(p); }

/// 1-based pile number as shown to people and written on the wire.
constexpr int pile_number(Pile p) { return index(p) + 1; }

constexpr Pile pile_from_index(int i) { return static_cast<Pile>(i); }

// ----------------------------------------------------------------------------
// Card
// ----------------------------------------------------------------------------

struct Card {
    Color color = Color::Red;
    Shape shape = Shape::Diamond;
    Count count = Count::One;

    constexpr int id() const { return 9 * index(color) + 3 * index(shape) + index(count); }

    /// Index of this card's value along `d` (0..2).
    constexpr int value_index(Dimension d) const
    {
        switch (d) {
        case Dimension::Color: return index(color);
        case Dimension::Shape: return index(shape);
        case Dimension::Count: return index(count);
        }
        return 0;
    }

    static constexpr Card from_id(int id)
    {
        return Card{static_cast<Color>(id / 9), static_cast<Shape>((id / 3) % 3),
                    static_cast<Count>(id % 3)};
    }

    friend constexpr bool operator==(const Card&, const Card&) = default;
};

/// All 27 cards ordered by id.
inline constexpr std::array<Card, kNumCards> deck()
{
    std::array<Card, kNumCards> cards{};
    for (int id = 0; id < kNumCards; ++id) cards[id] = Card::from_id(id);
    return cards;
}

inline std::string card_label(const Card& c)
{
    return std::string(kCountNames[index(c.count)]) + " " + std::string(kColorNames[index(c.color)]) +
           " " + std::string(kShapeNames[index(c.shape)]);
}

// ----------------------------------------------------------------------------
// Feature values and assertions
// ----------------------------------------------------------------------------

/// One of the nine feature values, e.g. Red or Squiggle.
struct FeatureValue {
    Dimension dimension = Dimension::Color;
    int index = 0;

    constexpr int id() const { return 3 * tom2::index(dimension) + index; }
    static constexpr FeatureValue from_id(int id) { return {static_cast<Dimension>(id / 3), id % 3}; }

    std::string_view name() const
    {
        switch (dimension) {
        case Dimension::Color: return kColorNames[index];
        case Dimension::Shape: return kShapeNames[index];
        case Dimension::Count: return kCountNames[index];
        }
        return {};
    }

    friend constexpr bool operator==(const FeatureValue&, const FeatureValue&) = default;
};

inline std::optional<FeatureValue> parse_feature_value(std::string_view name)
{
    for (int id = 0; id < kNumValues; ++id) {
        auto v = FeatureValue::from_id(id);
        if (v.name() == name) return v;
    }
    return std::nullopt;
}

/// "value v belongs in pile p". Assertion ids order by (dimension, value index, pile index).
struct Assertion {
    FeatureValue value;
    Pile pile = Pile::Pile1;

    constexpr int id() const { return 3 * value.id() + tom2::index(pile); }
    static constexpr Assertion from_id(int id)
    {
        return {FeatureValue::from_id(id / 3), pile_from_index(id % 3)};
    }

    friend constexpr bool operator==(const Assertion&, const Assertion&) = default;
};

// ----------------------------------------------------------------------------
// Rule
// ----------------------------------------------------------------------------

/// A sorting rule: one dimension plus a bijection from its three values onto the piles.
/// `mapping[v]` is the pile receiving value index v.
struct Rule {
    Dimension dimension = Dimension::Color;
    std::array<Pile, 3> mapping{Pile::Pile1, Pile::Pile2, Pile::Pile3};

    /// The six permutations of three piles in lexicographic order.
    static constexpr std::array<std::array<int, 3>, 6> kPermutations{{
        {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0},
    }};

    constexpr int permutation_index() const
    {
        for (int i = 0; i < 6; ++i) {
            const auto& p = kPermutations[i];
            if (index(mapping[0]) == p[0] && index(mapping[1]) == p[1] && index(mapping[2]) == p[2])
                return i;
        }
        return -1;
    }

    constexpr int id() const { return 6 * index(dimension) + permutation_index(); }

    static constexpr Rule from_id(int id)
    {
        const auto& p = kPermutations[id % 6];
        return Rule{static_cast<Dimension>(id / 6),
                    {pile_from_index(p[0]), pile_from_index(p[1]), pile_from_index(p[2])}};
    }

    /// Does this rule send `a.value` to `a.pile`?
    constexpr bool asserts(const Assertion& a) const
    {
        return a.value.dimension == dimension && mapping[a.value.index] == a.pile;
    }

    friend constexpr bool operator==(const Rule&, const Rule&) = default;
};

inline constexpr std::array<Rule, kNumRules> enumerate_rules()
{
    std::array<Rule, kNumRules> rules{};
    for (int id = 0; id < kNumRules; ++id) rules[id] = Rule::from_id(id);
    return rules;
}

constexpr Pile sort_card(const Rule& rule, const Card& card)
{
    return rule.mapping[card.value_index(rule.dimension)];
}

/// "Reds belong in Pile 1. Blues belong in Pile 2. Greens belong in Pile 3."
inline std::string describe_rule(const Rule& rule)
{
    std::string out;
    for (int v = 0; v < 3; ++v) {
        if (!out.empty()) out += ' ';
        out += std::string(FeatureValue{rule.dimension, v}.name()) + "s belong in Pile " +
               std::to_string(pile_number(rule.mapping[v])) + ".";
    }
    return out;
}

// ----------------------------------------------------------------------------
// Plays and histories
// ----------------------------------------------------------------------------

struct CardPlay {
    Card card;
    Pile pile = Pile::Pile1;
    int round = 1;

    friend constexpr bool operator==(const CardPlay&, const CardPlay&) = default;
};

using History = std::vector<CardPlay>;
using RuleSet = std::bitset<kNumRules>;
using CardSet = std::bitset<kNumCards>;

/// Rules under which every play in `history` lands on its recorded pile, as ascending ids.
/// Empty when the history contradicts itself.
inline std::vector<int> consistent_rules(std::span<const CardPlay> history)
{
    std::vector<int> ids;
    for (const auto& rule : enumerate_rules()) {
        bool ok = true;
        for (const auto& play : history) {
            if (sort_card(rule, play.card) != play.pile) {
                ok = false;
                break;
            }
        }
        if (ok) ids.push_back(rule.id());
    }
    return ids;
}

inline CardSet played_cards(std::span<const CardPlay> history)
{
    CardSet s;
    for (const auto& play : history) s.set(play.card.id());
    return s;
}

/// Cards not yet in `history`, ascending by id.
inline std::vector<Card> unplayed_cards(std::span<const CardPlay> history)
{
    const CardSet played = played_cards(history);
    std::vector<Card> out;
    for (int id = 0; id < kNumCards; ++id)
        if (!played.test(id)) out.push_back(Card::from_id(id));
    return out;
}

// ----------------------------------------------------------------------------
// JSON encodings
// ----------------------------------------------------------------------------

namespace detail {

template <std::size_t N>
int lookup_name(const std::array<std::string_view, N>& names, const std::string& s, const char* field)
{
    for (std::size_t i = 0; i < N; ++i)
        if (names[i] == s) return static_cast<int>(i);
    throw Error(ErrorCode::InvalidConfig, "unknown " + std::string(field) + " '" + s + "'", field);
}

inline Pile pile_from_json(const json& j, const char* field = "pile")
{
    if (!j.is_number_integer()) throw Error(ErrorCode::InvalidConfig, "pile must be 1, 2 or 3", field);
    const int n = j.get<int>();
    if (n < 1 || n > 3) throw Error(ErrorCode::InvalidConfig, "pile must be 1, 2 or 3", field);
    return pile_from_index(n - 1);
}

inline int card_id_from_json(const json& j, const char* field = "card_id")
{
    if (!j.is_number_integer()) throw Error(ErrorCode::InvalidConfig, "card id must be an integer", field);
    const int id = j.get<int>();
    if (id < 0 || id >= kNumCards) throw Error(ErrorCode::InvalidConfig, "card id out of range 0..26", field);
    return id;
}

} // namespace detail

inline void to_json(json& j, const Card& c)
{
    j = json{{"color", kColorNames[index(c.color)]},
             {"shape", kShapeNames[index(c.shape)]},
             {"count", kCountNames[index(c.count)]},
             {"id", c.id()}};
}

inline void from_json(const json& j, Card& c)
{
    if (j.contains("id")) {
        c = Card::from_id(detail::card_id_from_json(j.at("id"), "id"));
        return;
    }
    c.color = static_cast<Color>(detail::lookup_name(kColorNames, j.at("color").get<std::string>(), "color"));
    c.shape = static_cast<Shape>(detail::lookup_name(kShapeNames, j.at("shape").get<std::string>(), "shape"));
    c.count = static_cast<Count>(detail::lookup_name(kCountNames, j.at("count").get<std::string>(), "count"));
}

inline void to_json(json& j, const Rule& r)
{
    json mapping = json::object();
    for (int v = 0; v < 3; ++v)
        mapping[std::string(FeatureValue{r.dimension, v}.name())] = pile_number(r.mapping[v]);
    j = json{{"dimension", kDimensionNames[index(r.dimension)]}, {"mapping", mapping}, {"id", r.id()}};
}

/// Accepts either {"id": n} or {"dimension", "mapping"}; the mapping must be a bijection.
inline void from_json(const json& j, Rule& r)
{
    if (!j.contains("mapping")) {
        if (!j.contains("id") || !j.at("id").is_number_integer())
            throw Error(ErrorCode::InvalidConfig, "rule needs an id or a dimension and mapping", "rule");
        const int id = j.at("id").get<int>();
        if (id < 0 || id >= kNumRules) throw Error(ErrorCode::InvalidConfig, "rule id out of range 0..17", "rule");
        r = Rule::from_id(id);
        return;
    }
    const auto dim = static_cast<Dimension>(
        detail::lookup_name(kDimensionNames, j.at("dimension").get<std::string>(), "dimension"));
    const json& m = j.at("mapping");
    Rule out{dim, {}};
    std::array<bool, 3> used{};
    for (int v = 0; v < 3; ++v) {
        const std::string name(FeatureValue{dim, v}.name());
        if (!m.contains(name))
            throw Error(ErrorCode::InvalidConfig, "rule mapping is missing value " + name, "rule.mapping");
        const Pile p = detail::pile_from_json(m.at(name), "rule.mapping");
        if (used[index(p)]) throw Error(ErrorCode::InvalidConfig, "rule mapping is not a bijection", "rule.mapping");
        used[index(p)] = true;
        out.mapping[v] = p;
    }
    r = out;
}

inline void to_json(json& j, const CardPlay& p)
{
    j = json{{"card_id", p.card.id()}, {"pile", pile_number(p.pile)}, {"round", p.round}};
}

inline void from_json(const json& j, CardPlay& p)
{
    p.card = Card::from_id(detail::card_id_from_json(j.at("card_id")));
    p.pile = detail::pile_from_json(j.at("pile"));
    p.round = j.at("round").get<int>();
}

} // namespace tom2
