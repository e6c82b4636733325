#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kgwalk {

enum class EntityKind { Disease, DiseaseCategory, RiskFactor };

enum class RelationOrigin { Domain, Have, SelfLoop };

struct Entity {
    int id = -1;
    std::string name;
    EntityKind kind = EntityKind::Disease;
};

struct RelationType {
    int id = -1;
    std::string name;
    RelationOrigin origin = RelationOrigin::Domain;
};

struct Triplet {
    int head = -1;
    int relation = -1;
    int tail = -1;
};

// An outgoing edge as seen by the walker: traverse `relation`, land on `tail`.
struct Action {
    int relation = -1;
    int tail = -1;
    friend bool operator==(const Action&, const Action&) = default;
};

std::string_view to_string(EntityKind kind);
std::optional<EntityKind> parse_entity_kind(std::string_view text);

/// Immutable directed multigraph of medical concepts. Construction appends a
/// "have" relation type (patient links) and a "self_loop" relation type, and
/// inserts one self-loop edge per entity so the walker can stay on a reached
/// entity. Safe for concurrent reads once built.
class KnowledgeGraph {
public:
    /// Parses the line-oriented text format:
    ///   entity<TAB>name<TAB>kind          kind in {disease, disease_category, risk_factor}
    ///   triplet<TAB>head<TAB>relation<TAB>tail
    /// Blank lines and lines starting with '#' are ignored. Malformed records,
    /// duplicate entity names, and dangling triplet references fail with the
    /// offending location.
    static KnowledgeGraph load(const std::string& path);

    /// Builds from in-memory parts; same validation as load(). Relation types
    /// are assigned ids in first-appearance order over the triplet list.
    static KnowledgeGraph build(std::vector<std::pair<std::string, EntityKind>> entities,
                                std::vector<std::tuple<std::string, std::string, std::string>> triplets);

    int entity_count() const { return static_cast<int>(entities_.size()); }
    int relation_count() const { return static_cast<int>(relations_.size()); }
    int domain_relation_count() const { return relation_count() - 2; }
    int disease_count() const { return static_cast<int>(disease_entities_.size()); }

    const Entity& entity(int id) const;
    const RelationType& relation(int id) const;
    const std::vector<Entity>& entities() const { return entities_; }
    const std::vector<RelationType>& relations() const { return relations_; }

    std::optional<int> entity_id(std::string_view name) const;
    std::optional<int> relation_id(std::string_view name) const;

    int have_relation() const { return have_relation_; }
    int self_loop_relation() const { return self_loop_relation_; }

    /// All triplets including the inserted self-loops.
    const std::vector<Triplet>& triplets() const { return triplets_; }
    std::size_t domain_triplet_count() const { return domain_triplet_count_; }

    /// Outgoing edges of an entity, ordered by (tail id, relation id).
    const std::vector<Action>& outgoing(int entity) const;

    /// Dense index over disease-kind entities (the prediction targets),
    /// ascending by entity id. Returns -1 for non-disease entities.
    int disease_index(int entity_id) const;
    int disease_entity(int disease_index) const;
    const std::vector<int>& disease_entities() const { return disease_entities_; }

    bool is_disease(int entity_id) const { return disease_index(entity_id) >= 0; }

    /// Count of (head, tail) pairs connected by more than one relation type.
    /// Such pairs collapse to the lowest relation id in the tail-indexed policy.
    std::size_t parallel_edge_pairs() const { return parallel_edge_pairs_; }

private:
    KnowledgeGraph() = default;
    void finalize();

    std::vector<Entity> entities_;
    std::vector<RelationType> relations_;
    std::vector<Triplet> triplets_;
    std::size_t domain_triplet_count_ = 0;
    std::vector<std::vector<Action>> adjacency_;
    std::unordered_map<std::string, int> entity_by_name_;
    std::unordered_map<std::string, int> relation_by_name_;
    std::vector<int> disease_entities_;
    std::vector<int> disease_index_;  // entity id -> disease index or -1
    int have_relation_ = -1;
    int self_loop_relation_ = -1;
    std::size_t parallel_edge_pairs_ = 0;
};

/// The knowledge graph plus one patient: the set of entities the patient
/// currently "has". The patient entity itself carries no self-loop, so the
/// first step of every walk enters the graph.
class LinkedGraph {
public:
    /// characters is the binary p_c vector of length entity_count(). Throws
    /// DataError when no element is set (such a patient has no connection to
    /// the graph and cannot be walked).
    LinkedGraph(const KnowledgeGraph& base, const std::vector<std::uint8_t>& characters);

    /// Convenience constructor from an already-sorted link list.
    LinkedGraph(const KnowledgeGraph& base, std::vector<int> links);

    const KnowledgeGraph& base() const { return *base_; }
    const std::vector<int>& patient_links() const { return links_; }

private:
    const KnowledgeGraph* base_;
    std::vector<int> links_;  // ascending entity ids
};

/// Legal actions at a position. `current` empty means the walker is at the
/// patient entity (all have-edges). At an entity: every outgoing edge whose
/// tail is not a previously visited entity, with the self-loop always kept.
/// Ordered by (tail id, relation id). An empty result signals a dead end.
std::vector<Action> action_space(const LinkedGraph& graph, std::optional<int> current,
                                 const std::vector<int>& visited);

/// Collapses actions sharing a tail to the one with the lowest relation id
/// (the policy is indexed by tail entity). Increments *collisions once per
/// dropped action when provided.
std::vector<Action> unique_by_tail(const std::vector<Action>& space, std::size_t* collisions = nullptr);

/// Binary reachability vector over all entities: mask[i] = 1 iff some action
/// lands on entity i.
std::vector<std::uint8_t> action_mask(const std::vector<Action>& space, int entity_count);

}  // namespace kgwalk
