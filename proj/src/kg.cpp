#include "kgwalk/kg.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "kgwalk/errors.hpp"

namespace kgwalk {

namespace {

constexpr std::string_view kHaveName = "have";
constexpr std::string_view kSelfLoopName = "self_loop";

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

}  // namespace

std::string_view to_string(EntityKind kind) {
    switch (kind) {
        case EntityKind::Disease: return "disease";
        case EntityKind::DiseaseCategory: return "disease_category";
        case EntityKind::RiskFactor: return "risk_factor";
    }
    return "unknown";
}

std::optional<EntityKind> parse_entity_kind(std::string_view text) {
    if (text == "disease") return EntityKind::Disease;
    if (text == "disease_category") return EntityKind::DiseaseCategory;
    if (text == "risk_factor") return EntityKind::RiskFactor;
    return std::nullopt;
}

KnowledgeGraph KnowledgeGraph::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open knowledge graph file: " + path);

    std::vector<std::pair<std::string, EntityKind>> entities;
    std::vector<std::tuple<std::string, std::string, std::string>> triplets;

    std::string line;
    int line_no = 0;
    auto fail = [&](const std::string& message) {
        throw DataError(path + ":" + std::to_string(line_no) + ": " + message);
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_tabs(line);
        if (fields[0] == "entity") {
            if (fields.size() != 3) fail("entity record needs 3 fields: entity<TAB>name<TAB>kind");
            auto kind = parse_entity_kind(fields[2]);
            if (!kind) fail("unknown entity kind '" + fields[2] + "'");
            if (fields[1].empty()) fail("empty entity name");
            entities.emplace_back(fields[1], *kind);
        } else if (fields[0] == "triplet") {
            if (fields.size() != 4) fail("triplet record needs 4 fields: triplet<TAB>head<TAB>relation<TAB>tail");
            triplets.emplace_back(fields[1], fields[2], fields[3]);
        } else {
            fail("unknown record type '" + fields[0] + "'");
        }
    }

    try {
        return build(std::move(entities), std::move(triplets));
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

KnowledgeGraph KnowledgeGraph::build(std::vector<std::pair<std::string, EntityKind>> entities,
                                     std::vector<std::tuple<std::string, std::string, std::string>> triplets) {
    if (entities.empty()) throw DataError("knowledge graph has no entities");

    KnowledgeGraph kg;
    kg.entities_.reserve(entities.size());
    for (auto& [name, kind] : entities) {
        if (name.empty()) throw DataError("empty entity name");
        int id = static_cast<int>(kg.entities_.size());
        if (!kg.entity_by_name_.emplace(name, id).second)
            throw DataError("duplicate entity name '" + name + "'");
        kg.entities_.push_back(Entity{id, std::move(name), kind});
    }

    // Domain relation types in first-appearance order over the triplet list.
    for (const auto& [head, rel, tail] : triplets) {
        (void)head;
        (void)tail;
        if (rel.empty()) throw DataError("empty relation name");
        if (rel == kHaveName || rel == kSelfLoopName)
            throw DataError("relation name '" + rel + "' is reserved");
        if (kg.relation_by_name_.emplace(rel, static_cast<int>(kg.relations_.size())).second) {
            kg.relations_.push_back(
                RelationType{static_cast<int>(kg.relations_.size()), rel, RelationOrigin::Domain});
        }
    }
    kg.have_relation_ = static_cast<int>(kg.relations_.size());
    kg.relations_.push_back(RelationType{kg.have_relation_, std::string(kHaveName), RelationOrigin::Have});
    kg.relation_by_name_.emplace(std::string(kHaveName), kg.have_relation_);
    kg.self_loop_relation_ = static_cast<int>(kg.relations_.size());
    kg.relations_.push_back(
        RelationType{kg.self_loop_relation_, std::string(kSelfLoopName), RelationOrigin::SelfLoop});
    kg.relation_by_name_.emplace(std::string(kSelfLoopName), kg.self_loop_relation_);

    std::set<std::tuple<int, int, int>> seen;
    for (const auto& [head, rel, tail] : triplets) {
        auto h = kg.entity_id(head);
        if (!h) throw DataError("triplet references unknown head entity '" + head + "'");
        auto t = kg.entity_id(tail);
        if (!t) throw DataError("triplet references unknown tail entity '" + tail + "'");
        int r = *kg.relation_id(rel);
        if (!seen.emplace(*h, r, *t).second)
            throw DataError("duplicate triplet (" + head + ", " + rel + ", " + tail + ")");
        kg.triplets_.push_back(Triplet{*h, r, *t});
    }
    kg.domain_triplet_count_ = kg.triplets_.size();

    kg.finalize();
    return kg;
}

void KnowledgeGraph::finalize() {
    const int m = entity_count();
    for (int i = 0; i < m; ++i) triplets_.push_back(Triplet{i, self_loop_relation_, i});

    adjacency_.assign(m, {});
    for (const Triplet& t : triplets_) adjacency_[t.head].push_back(Action{t.relation, t.tail});
    for (auto& edges : adjacency_) {
        std::sort(edges.begin(), edges.end(),
                  [](const Action& a, const Action& b) { return std::tie(a.tail, a.relation) < std::tie(b.tail, b.relation); });
    }

    // Parallel (head, tail) pairs: adjacent after sorting.
    for (const auto& edges : adjacency_) {
        for (std::size_t i = 1; i < edges.size(); ++i) {
            if (edges[i].tail == edges[i - 1].tail && (i == 1 || edges[i - 1].tail != edges[i - 2].tail)) {
                ++parallel_edge_pairs_;
            }
        }
    }

    disease_index_.assign(m, -1);
    for (int i = 0; i < m; ++i) {
        if (entities_[i].kind == EntityKind::Disease) {
            disease_index_[i] = static_cast<int>(disease_entities_.size());
            disease_entities_.push_back(i);
        }
    }
}

const Entity& KnowledgeGraph::entity(int id) const {
    if (id < 0 || id >= entity_count()) throw std::invalid_argument("entity id out of range");
    return entities_[id];
}

const RelationType& KnowledgeGraph::relation(int id) const {
    if (id < 0 || id >= relation_count()) throw std::invalid_argument("relation id out of range");
    return relations_[id];
}

std::optional<int> KnowledgeGraph::entity_id(std::string_view name) const {
    auto it = entity_by_name_.find(std::string(name));
    if (it == entity_by_name_.end()) return std::nullopt;
    return it->second;
}

std::optional<int> KnowledgeGraph::relation_id(std::string_view name) const {
    auto it = relation_by_name_.find(std::string(name));
    if (it == relation_by_name_.end()) return std::nullopt;
    return it->second;
}

const std::vector<Action>& KnowledgeGraph::outgoing(int entity) const {
    if (entity < 0 || entity >= entity_count()) throw std::invalid_argument("entity id out of range");
    return adjacency_[entity];
}

int KnowledgeGraph::disease_index(int entity_id) const {
    if (entity_id < 0 || entity_id >= entity_count()) throw std::invalid_argument("entity id out of range");
    return disease_index_[entity_id];
}

int KnowledgeGraph::disease_entity(int disease_index) const {
    if (disease_index < 0 || disease_index >= disease_count())
        throw std::invalid_argument("disease index out of range");
    return disease_entities_[disease_index];
}

LinkedGraph::LinkedGraph(const KnowledgeGraph& base, const std::vector<std::uint8_t>& characters)
    : base_(&base) {
    if (static_cast<int>(characters.size()) != base.entity_count())
        throw std::invalid_argument("patient character vector length does not match entity count");
    for (int i = 0; i < base.entity_count(); ++i) {
        if (characters[i]) links_.push_back(i);
    }
    if (links_.empty()) throw DataError("patient has no connection to KG");
}

LinkedGraph::LinkedGraph(const KnowledgeGraph& base, std::vector<int> links)
    : base_(&base), links_(std::move(links)) {
    if (links_.empty()) throw DataError("patient has no connection to KG");
    std::sort(links_.begin(), links_.end());
    links_.erase(std::unique(links_.begin(), links_.end()), links_.end());
    for (int id : links_) {
        if (id < 0 || id >= base.entity_count()) throw std::invalid_argument("patient link out of range");
    }
}

std::vector<Action> action_space(const LinkedGraph& graph, std::optional<int> current,
                                 const std::vector<int>& visited) {
    std::vector<Action> space;
    if (!current) {
        const int have = graph.base().have_relation();
        space.reserve(graph.patient_links().size());
        for (int link : graph.patient_links()) space.push_back(Action{have, link});
        return space;
    }
    const int self_loop = graph.base().self_loop_relation();
    for (const Action& edge : graph.base().outgoing(*current)) {
        if (edge.relation == self_loop) {
            space.push_back(edge);
            continue;
        }
        bool excluded = std::find(visited.begin(), visited.end(), edge.tail) != visited.end();
        if (!excluded) space.push_back(edge);
    }
    return space;  // adjacency is pre-sorted by (tail, relation)
}

std::vector<Action> unique_by_tail(const std::vector<Action>& space, std::size_t* collisions) {
    std::vector<Action> result;
    result.reserve(space.size());
    for (const Action& a : space) {
        if (!result.empty() && result.back().tail == a.tail) {
            if (a.relation < result.back().relation) result.back().relation = a.relation;
            if (collisions) ++*collisions;
        } else {
            result.push_back(a);
        }
    }
    return result;
}

std::vector<std::uint8_t> action_mask(const std::vector<Action>& space, int entity_count) {
    std::vector<std::uint8_t> mask(entity_count, 0);
    for (const Action& a : space) {
        if (a.tail < 0 || a.tail >= entity_count) throw std::invalid_argument("action tail out of range");
        mask[a.tail] = 1;
    }
    return mask;
}

}  // namespace kgwalk
