#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "gqe/graph.hpp"
#include "gqe/query.hpp"
#include "testutil.hpp"

using namespace gqe;

namespace {

// Star fixture: one hub of type S with r-edges to a subset of T-nodes, a
// second hub, and an extra relation for chain shapes.
struct Fixture {
    TypedGraph g;
    int v1, v2, r, s;

    Fixture() {
        GraphBuilder b;
        const int S = b.add_type("S");
        const int T = b.add_type("T");
        b.add_node("v1", S);
        b.add_node("v2", S);
        for (const char* n : {"a", "b", "c", "d"}) b.add_node(n, T);
        b.add_edge("v1", "r", "a");
        b.add_edge("v1", "r", "b");
        b.add_edge("v2", "r", "b");
        b.add_edge("v2", "r", "c");
        b.add_edge("a", "s", "b");
        b.add_edge("b", "s", "c");
        g = b.finish();
        v1 = g.find_node("v1");
        v2 = g.find_node("v2");
        r = g.find_relation("r");
        s = g.find_relation("s");
    }

    QueryDag chain1(int anchor) const {
        QueryDag q;
        q.nodes = {{NodeKind::Anchor, anchor, g.node_type(anchor)}, {NodeKind::Target, -1, g.find_type("T")}};
        q.edges = {{0, r, 1}};
        q.structure = "chain1";
        return q;
    }

    QueryDag inter2(int a1, int a2) const {
        QueryDag q;
        q.nodes = {{NodeKind::Anchor, a1, g.node_type(a1)},
                   {NodeKind::Anchor, a2, g.node_type(a2)},
                   {NodeKind::Target, -1, g.find_type("T")}};
        q.edges = {{0, r, 2}, {1, r, 2}};
        q.structure = "inter2";
        return q;
    }
};

std::vector<int> ids(const TypedGraph& g, const std::vector<const char*>& names) {
    std::vector<int> out;
    for (const char* n : names) out.push_back(g.find_node(n));
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST_CASE("structure catalog lists the seven shapes", "[query]") {
    const auto& cat = structure_catalog();
    REQUIRE(cat.size() == 7);
    std::set<std::string> names;
    for (const StructureId& s : cat) {
        names.insert(s.name);
        CHECK(s.edge_count() >= 1);
        CHECK(s.edge_count() <= 3);
    }
    CHECK(names == std::set<std::string>{"chain1", "chain2", "chain3", "inter2", "inter3",
                                         "chain_inter", "inter_chain"});
    CHECK(find_structure("chain1").degree_vector == std::vector<int>{1});
    CHECK(find_structure("chain_inter").degree_vector == std::vector<int>{2, 1});
    CHECK(find_structure("inter_chain").degree_vector == std::vector<int>{1, 2});
    CHECK(find_structure("inter3").degree_vector == std::vector<int>{3});
    CHECK_THROWS_AS(find_structure("chain9"), ArgumentError);

    // chain_inter intersects at the target (first degree entry > 1),
    // inter_chain at a bound variable.
    CHECK(find_structure("chain_inter").degree_vector.front() == 2);
    CHECK(find_structure("inter_chain").degree_vector.front() == 1);
}

TEST_CASE("validate accepts a well-formed chain2", "[query]") {
    Fixture f;
    QueryDag q;
    q.nodes = {{NodeKind::Anchor, f.v1, f.g.find_type("S")},
               {NodeKind::Variable, -1, f.g.find_type("T")},
               {NodeKind::Target, -1, f.g.find_type("T")}};
    q.edges = {{0, f.r, 1}, {1, f.s, 2}};
    CHECK(validate(q, f.g).empty());
}

TEST_CASE("validate reports each violation", "[query]") {
    Fixture f;
    const int S = f.g.find_type("S"), T = f.g.find_type("T");

    SECTION("two-edge cycle") {
        QueryDag q;
        q.nodes = {{NodeKind::Anchor, f.g.find_node("a"), T}, {NodeKind::Variable, -1, T},
                   {NodeKind::Target, -1, T}};
        q.edges = {{0, f.s, 1}, {1, f.s, 2}, {2, f.s, 1}};
        const auto bad = validate(q, f.g);
        CHECK(std::any_of(bad.begin(), bad.end(),
                          [](const std::string& m) { return m.find("not a DAG") != std::string::npos; }));
    }

    SECTION("two sinks") {
        QueryDag q;
        q.nodes = {{NodeKind::Anchor, f.v1, S}, {NodeKind::Variable, -1, T}, {NodeKind::Target, -1, T}};
        q.edges = {{0, f.r, 1}, {0, f.r, 2}};  // the variable is a second sink
        const auto bad = validate(q, f.g);
        CHECK(std::any_of(bad.begin(), bad.end(), [](const std::string& m) {
            return m.find("sink") != std::string::npos;
        }));
    }

    SECTION("anchor type mismatch and relation signature breach") {
        QueryDag q;
        q.nodes = {{NodeKind::Anchor, f.g.find_node("a"), S},  // 'a' is a T node
                   {NodeKind::Target, -1, S}};
        q.edges = {{0, f.r, 1}};  // r: S -> T, both endpoints wrong
        const auto bad = validate(q, f.g);
        CHECK(bad.size() >= 2);
    }

    SECTION("missing target") {
        QueryDag q;
        q.nodes = {{NodeKind::Anchor, f.v1, S}, {NodeKind::Variable, -1, T}};
        q.edges = {{0, f.r, 1}};
        const auto bad = validate(q, f.g);
        CHECK(!bad.empty());
    }

    SECTION("out-of-range indices do not crash") {
        QueryDag q;
        q.nodes = {{NodeKind::Anchor, f.v1, S}, {NodeKind::Target, -1, T}};
        q.edges = {{0, f.r, 7}};
        CHECK(!validate(q, f.g).empty());
    }
}

TEST_CASE("denotation matches set semantics on the star fixture", "[query]") {
    Fixture f;

    // chain1: exactly the r-neighborhood of the anchor.
    CHECK(denotation(f.chain1(f.v1), f.g).members == ids(f.g, {"a", "b"}));
    CHECK(denotation(f.chain1(f.v2), f.g).members == ids(f.g, {"b", "c"}));

    // inter2: {a,b} vs {b,c} intersect to {b}; disjunctive relaxation unions.
    QueryDag both = f.inter2(f.v1, f.v2);
    CHECK(denotation(both, f.g).members == ids(f.g, {"b"}));
    CHECK(denotation_disjunctive(both, f.g).members == ids(f.g, {"a", "b", "c"}));

    // Chains have no intersection: both semantics agree.
    QueryDag c1 = f.chain1(f.v1);
    CHECK(denotation_disjunctive(c1, f.g).members == denotation(c1, f.g).members);

    // Duplicate anchors are legal.
    QueryDag dup = f.inter2(f.v1, f.v1);
    CHECK(validate(dup, f.g).empty());
    CHECK(denotation(dup, f.g).members == ids(f.g, {"a", "b"}));
}

TEST_CASE("inter3 set algebra", "[query]") {
    // Three hubs with sets {a,b}, {b,c}, {b,d}.
    GraphBuilder b;
    const int S = b.add_type("S");
    const int T = b.add_type("T");
    for (const char* n : {"v1", "v2", "v3"}) b.add_node(n, S);
    for (const char* n : {"a", "b", "c", "d"}) b.add_node(n, T);
    b.add_edge("v1", "r", "a");
    b.add_edge("v1", "r", "b");
    b.add_edge("v2", "r", "b");
    b.add_edge("v2", "r", "c");
    b.add_edge("v3", "r", "b");
    b.add_edge("v3", "r", "d");
    TypedGraph g = b.finish();
    const int r = g.find_relation("r");

    QueryDag q;
    q.nodes = {{NodeKind::Anchor, g.find_node("v1"), S},
               {NodeKind::Anchor, g.find_node("v2"), S},
               {NodeKind::Anchor, g.find_node("v3"), S},
               {NodeKind::Target, -1, T}};
    q.edges = {{0, r, 3}, {1, r, 3}, {2, r, 3}};
    q.structure = "inter3";
    REQUIRE(validate(q, g).empty());
    CHECK(denotation(q, g).members == ids(g, {"b"}));
    CHECK(denotation_disjunctive(q, g).members == ids(g, {"a", "b", "c", "d"}));
}

TEST_CASE("oracle equals brute-force enumeration on random queries", "[query][oracle]") {
    Rng rng(2024);
    int done = 0;
    while (done < 200) {
        TypedGraph g = testutil::random_typed_graph(rng, 25 + static_cast<int>(rng.uniform_int(20)),
                                                    2 + static_cast<int>(rng.uniform_int(2)),
                                                    3 + static_cast<int>(rng.uniform_int(2)), 0.08);
        for (const StructureId& s : structure_catalog()) {
            auto q = testutil::random_query(g, s, rng);
            if (!q) continue;
            REQUIRE(validate(*q, g).empty());
            CHECK(denotation(*q, g).members == testutil::brute_force_denotation(*q, g));
            CHECK(denotation_disjunctive(*q, g).members == testutil::brute_force_disjunctive(*q, g));
            ++done;
        }
    }
}

TEST_CASE("denotation is monotone in the edge set and relaxation is a superset", "[query]") {
    Rng rng(555);
    for (int trial = 0; trial < 20; ++trial) {
        TypedGraph g = testutil::random_typed_graph(rng, 30, 2, 3, 0.15);
        GraphSplit split = split_edges(g, 0.2, 99 + static_cast<std::uint64_t>(trial));
        for (const StructureId& s : structure_catalog()) {
            auto q = testutil::random_query(g, s, rng);
            if (!q) continue;
            const Denotation on_train = denotation(*q, split.train_graph);
            const Denotation on_full = denotation(*q, g);
            CHECK(std::includes(on_full.members.begin(), on_full.members.end(),
                                on_train.members.begin(), on_train.members.end()));
            const Denotation relaxed = denotation_disjunctive(*q, g);
            CHECK(std::includes(relaxed.members.begin(), relaxed.members.end(),
                                on_full.members.begin(), on_full.members.end()));
        }
    }
}

TEST_CASE("degree vectors identify sampled shapes", "[query]") {
    Rng rng(808);
    TypedGraph g = testutil::random_typed_graph(rng, 30, 3, 4, 0.2);
    for (const StructureId& s : structure_catalog()) {
        auto q = testutil::random_query(g, s, rng);
        REQUIRE(q.has_value());
        CHECK(degree_vector_of(*q) == s.degree_vector);
        CHECK(structure_of(*q).name == s.name);
    }
}

TEST_CASE("query JSON round-trips", "[query]") {
    Fixture f;
    QueryDag q = f.inter2(f.v1, f.v2);
    const nlohmann::json j = query_to_json(q, f.g);
    CHECK(j["structure"] == "inter2");
    CHECK(j["target_type"] == "T");
    CHECK(j["nodes"].size() == 3);
    CHECK(j["edges"].size() == 2);

    QueryDag back = query_from_json(j, f.g);
    REQUIRE(back.nodes.size() == q.nodes.size());
    for (std::size_t i = 0; i < q.nodes.size(); ++i) {
        CHECK(back.nodes[i].kind == q.nodes[i].kind);
        CHECK(back.nodes[i].node == q.nodes[i].node);
        CHECK(back.nodes[i].type == q.nodes[i].type);
    }
    CHECK(back.edges.size() == q.edges.size());
    CHECK(back.structure == "inter2");

    // Structure tag is inferred when missing.
    nlohmann::json no_tag = j;
    no_tag.erase("structure");
    CHECK(query_from_json(no_tag, f.g).structure == "inter2");
}

TEST_CASE("query JSON parse errors name the offending element", "[query]") {
    Fixture f;
    const nlohmann::json good = query_to_json(f.chain1(f.v1), f.g);

    nlohmann::json bad_node = good;
    bad_node["nodes"][0]["node"] = "nope";
    CHECK_THROWS_AS(query_from_json(bad_node, f.g), ParseError);

    nlohmann::json bad_rel = good;
    bad_rel["edges"][0][1] = "unknown_rel";
    CHECK_THROWS_AS(query_from_json(bad_rel, f.g), ParseError);

    nlohmann::json bad_kind = good;
    bad_kind["nodes"][0]["kind"] = "second_target";
    CHECK_THROWS_AS(query_from_json(bad_kind, f.g), ParseError);

    CHECK_THROWS_AS(query_from_json(nlohmann::json::array(), f.g), ParseError);
}
