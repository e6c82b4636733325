#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "kgwalk/errors.hpp"
#include "kgwalk/kg.hpp"
#include "kgwalk/rng.hpp"

using namespace kgwalk;

namespace {

// RF1 -causes-> D1 -causes-> D2
KnowledgeGraph toy_graph() {
    return KnowledgeGraph::build(
        {{"RF1", EntityKind::RiskFactor}, {"D1", EntityKind::Disease}, {"D2", EntityKind::Disease}},
        {{"RF1", "causes", "D1"}, {"D1", "causes", "D2"}});
}

std::string write_temp(const std::string& name, const std::string& content) {
    std::string path = std::string("/tmp/") + name;
    std::ofstream out(path, std::ios::trunc);
    out << content;
    return path;
}

}  // namespace

TEST_CASE("shipped mini graph loads with self-loops everywhere") {
    const KnowledgeGraph kg = KnowledgeGraph::load(std::string(KGWALK_DATA_DIR) + "/mini_kg.tsv");
    CHECK(kg.entity_count() == 20);
    CHECK(kg.disease_count() == 14);
    CHECK(kg.domain_relation_count() == 4);
    CHECK(kg.domain_triplet_count() == 37);
    // Self-loop guarantee: out-degree >= 1 and a self-loop edge on every entity.
    for (int i = 0; i < kg.entity_count(); ++i) {
        const auto& edges = kg.outgoing(i);
        CHECK(!edges.empty());
        bool has_self = false;
        for (const Action& a : edges) {
            if (a.relation == kg.self_loop_relation() && a.tail == i) has_self = true;
        }
        CHECK(has_self);
    }
}

TEST_CASE("full-scale counts pass through the loader") {
    // A generated file with the published graph dimensions: 65 entities
    // (53 disease, 5 category, 7 risk factor) and 326 domain triplets.
    std::string text;
    for (int i = 0; i < 53; ++i) text += "entity\td" + std::to_string(i) + "\tdisease\n";
    for (int i = 0; i < 5; ++i) text += "entity\tc" + std::to_string(i) + "\tdisease_category\n";
    for (int i = 0; i < 7; ++i) text += "entity\tr" + std::to_string(i) + "\trisk_factor\n";
    int written = 0;
    for (int h = 0; h < 65 && written < 326; ++h) {
        for (int t = 0; t < 65 && written < 326; ++t) {
            if (h == t) continue;
            auto name = [](int i) {
                if (i < 53) return "d" + std::to_string(i);
                if (i < 58) return "c" + std::to_string(i - 53);
                return "r" + std::to_string(i - 58);
            };
            text += "triplet\t" + name(h) + "\trel" + std::to_string(written % 6) + "\t" + name(t) + "\n";
            ++written;
        }
    }
    const KnowledgeGraph kg = KnowledgeGraph::load(write_temp("kg_full_counts.tsv", text));
    CHECK(kg.entity_count() == 65);
    CHECK(kg.disease_count() == 53);
    CHECK(kg.domain_triplet_count() == 326);
    CHECK(kg.triplets().size() == 326 + 65);  // self-loops added
}

TEST_CASE("load failures carry a location") {
    CHECK_THROWS_AS(KnowledgeGraph::load(write_temp("kg_empty.tsv", "# nothing\n")), DataError);
    CHECK_THROWS_AS(KnowledgeGraph::load(write_temp(
                        "kg_dup.tsv", "entity\ta\tdisease\nentity\ta\tdisease\n")),
                    DataError);
    CHECK_THROWS_AS(KnowledgeGraph::load(write_temp(
                        "kg_dangling.tsv", "entity\ta\tdisease\ntriplet\ta\tr\tmissing\n")),
                    DataError);
    CHECK_THROWS_AS(KnowledgeGraph::load(write_temp("kg_malformed.tsv", "entity\tonly_two\n")), DataError);
    CHECK_THROWS_AS(KnowledgeGraph::load(write_temp("kg_badkind.tsv", "entity\ta\tplanet\n")), DataError);
    CHECK_THROWS_AS(KnowledgeGraph::load(write_temp(
                        "kg_dup_triplet.tsv",
                        "entity\ta\tdisease\nentity\tb\tdisease\ntriplet\ta\tr\tb\ntriplet\ta\tr\tb\n")),
                    DataError);
    CHECK_THROWS_AS(KnowledgeGraph::load(write_temp(
                        "kg_reserved.tsv", "entity\ta\tdisease\nentity\tb\tdisease\ntriplet\ta\thave\tb\n")),
                    DataError);
}

TEST_CASE("adjacency of the 3-entity example") {
    const KnowledgeGraph kg = toy_graph();
    const int d1 = *kg.entity_id("D1");
    const int d2 = *kg.entity_id("D2");
    const int causes = *kg.relation_id("causes");
    const auto& edges = kg.outgoing(d1);
    REQUIRE(edges.size() == 2);
    // ordered by tail id: self-loop on D1 (id 1) before causes-D2 (id 2)
    CHECK(edges[0] == Action{kg.self_loop_relation(), d1});
    CHECK(edges[1] == Action{causes, d2});
}

TEST_CASE("link_patient") {
    const KnowledgeGraph kg = toy_graph();
    SUBCASE("links are the set positions of p_c") {
        LinkedGraph g(kg, std::vector<std::uint8_t>{1, 0, 1});
        CHECK(g.patient_links() == std::vector<int>{0, 2});
    }
    SUBCASE("all-zero p_c is rejected") {
        CHECK_THROWS_WITH_AS(LinkedGraph(kg, std::vector<std::uint8_t>{0, 0, 0}),
                             "patient has no connection to KG", DataError);
    }
    SUBCASE("all-ones p_c links every entity") {
        LinkedGraph g(kg, std::vector<std::uint8_t>{1, 1, 1});
        CHECK(g.patient_links() == std::vector<int>{0, 1, 2});
    }
    SUBCASE("length mismatch") {
        CHECK_THROWS_AS(LinkedGraph(kg, std::vector<std::uint8_t>{1, 0}), std::invalid_argument);
    }
}

TEST_CASE("action_space follows the exclusion rule") {
    const KnowledgeGraph kg = toy_graph();
    LinkedGraph g(kg, std::vector<int>{0, 1});  // RF1, D1
    const int rf1 = 0, d1 = 1, d2 = 2;
    const int causes = *kg.relation_id("causes");

    SUBCASE("at an entity with no history") {
        auto space = action_space(g, d1, {});
        REQUIRE(space.size() == 2);
        CHECK(space[0] == Action{kg.self_loop_relation(), d1});
        CHECK(space[1] == Action{causes, d2});
    }
    SUBCASE("history excludes the back-edge but never the self-loop") {
        // D2's only domain edge would point back to D1 in this variant.
        const KnowledgeGraph back = KnowledgeGraph::build(
            {{"RF1", EntityKind::RiskFactor}, {"D1", EntityKind::Disease}, {"D2", EntityKind::Disease}},
            {{"RF1", "causes", "D1"}, {"D1", "causes", "D2"}, {"D2", "causes", "D1"}});
        LinkedGraph gb(back, std::vector<int>{0});
        auto space = action_space(gb, d2, {d1});
        REQUIRE(space.size() == 1);
        CHECK(space[0] == Action{back.self_loop_relation(), d2});
    }
    SUBCASE("at the patient: exactly the have-edges") {
        auto space = action_space(g, std::nullopt, {});
        REQUIRE(space.size() == 2);
        CHECK(space[0] == Action{kg.have_relation(), rf1});
        CHECK(space[1] == Action{kg.have_relation(), d1});
    }
}

TEST_CASE("action_mask") {
    SUBCASE("marks distinct tails") {
        auto mask = action_mask({{5, 1}, {3, 2}}, 3);
        CHECK(mask == std::vector<std::uint8_t>{0, 1, 1});
    }
    SUBCASE("empty space gives the all-zero mask") {
        CHECK(action_mask({}, 3) == std::vector<std::uint8_t>{0, 0, 0});
    }
    SUBCASE("full coverage gives the all-ones mask") {
        CHECK(action_mask({{0, 0}, {0, 1}, {0, 2}}, 3) == std::vector<std::uint8_t>{1, 1, 1});
    }
    SUBCASE("out-of-range tail") {
        CHECK_THROWS_AS(action_mask({{0, 7}}, 3), std::invalid_argument);
    }
}

TEST_CASE("parallel edges collapse to the lowest relation id") {
    const KnowledgeGraph kg = KnowledgeGraph::build(
        {{"a", EntityKind::Disease}, {"b", EntityKind::Disease}},
        {{"a", "r0", "b"}, {"a", "r1", "b"}});
    CHECK(kg.parallel_edge_pairs() == 1);
    LinkedGraph g(kg, std::vector<int>{0});
    std::size_t collisions = 0;
    auto space = unique_by_tail(action_space(g, 0, {}), &collisions);
    CHECK(collisions == 1);
    REQUIRE(space.size() == 2);  // self-loop + one edge to b
    CHECK(space[1] == Action{*kg.relation_id("r0"), 1});
}

TEST_CASE("properties over random graphs") {
    rng::Engine eng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        const int m = 3 + static_cast<int>(eng.below(8));
        std::vector<std::pair<std::string, EntityKind>> entities;
        for (int i = 0; i < m; ++i) {
            EntityKind kind = i % 3 == 0 ? EntityKind::RiskFactor : EntityKind::Disease;
            entities.emplace_back("e" + std::to_string(i), kind);
        }
        std::set<std::pair<int, int>> used;
        std::vector<std::tuple<std::string, std::string, std::string>> triplets;
        const int edges = static_cast<int>(eng.below(static_cast<std::size_t>(2 * m))) + 1;
        for (int k = 0; k < edges; ++k) {
            int h = static_cast<int>(eng.below(m));
            int t = static_cast<int>(eng.below(m));
            if (h == t || !used.emplace(h, t).second) continue;
            triplets.emplace_back("e" + std::to_string(h), "rel", "e" + std::to_string(t));
        }
        const KnowledgeGraph kg = KnowledgeGraph::build(entities, triplets);

        std::vector<std::uint8_t> p_c(m, 0);
        p_c[eng.below(m)] = 1;
        LinkedGraph g(kg, p_c);

        // popcount(p_c) patient actions
        CHECK(action_space(g, std::nullopt, {}).size() == g.patient_links().size());

        const int current = static_cast<int>(eng.below(m));
        std::vector<int> visited;
        for (int i = 0; i < m; ++i) {
            if (i != current && eng.bernoulli(0.3)) visited.push_back(i);
        }
        auto space = action_space(g, current, visited);
        for (const Action& a : space) {
            const bool is_self = a.relation == kg.self_loop_relation();
            if (!is_self) {
                for (int v : visited) CHECK(a.tail != v);
            }
        }
        // mask popcount equals the distinct tail count
        auto dedup = unique_by_tail(space);
        auto mask = action_mask(space, m);
        std::size_t popcount = 0;
        for (auto b : mask) popcount += b;
        CHECK(popcount == dedup.size());

        // purity: identical inputs, identical outputs
        CHECK(action_space(g, current, visited) == space);
    }
}
