#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "gqe/graph.hpp"
#include "gqe/query.hpp"
#include "gqe/sampler.hpp"
#include "gqe/synthetic.hpp"
#include "testutil.hpp"

using namespace gqe;

TEST_CASE("sample_query on a one-edge graph roots at either endpoint", "[sampler]") {
    GraphBuilder b;
    const int T = b.add_type("T");
    b.add_node("a", T);
    b.add_node("b", T);
    b.add_edge("a", "r", "b");
    TypedGraph g = b.finish();

    Rng rng(3);
    std::set<std::string> seen;
    for (int i = 0; i < 40; ++i) {
        auto [q, positive] = sample_query(g, find_structure("chain1"), rng);
        REQUIRE(validate(q, g).empty());
        CHECK(denotation(q, g).contains(positive));
        seen.insert(g.relation(q.edges[0].rel).name + "->" + g.node_name(positive));
    }
    // Roots a and b are both reachable; relation is r^-1 or r accordingly.
    CHECK(seen == std::set<std::string>{"r->b", "r^-1->a"});
}

TEST_CASE("sampled queries are valid members with exact edge counts", "[sampler]") {
    Rng graph_rng(17);
    TypedGraph g = testutil::random_typed_graph(graph_rng, 100, 3, 4, 0.05);
    Rng rng(18);
    for (const StructureId& s : structure_catalog()) {
        for (int i = 0; i < 150; ++i) {
            auto [q, positive] = sample_query(g, s, rng);
            REQUIRE(validate(q, g).empty());
            CHECK(q.edges.size() == static_cast<std::size_t>(s.edge_count()));
            CHECK(degree_vector_of(q) == s.degree_vector);
            CHECK(denotation(q, g).contains(positive));
        }
    }
}

TEST_CASE("sibling atoms never repeat", "[sampler]") {
    Rng graph_rng(23);
    TypedGraph g = testutil::random_typed_graph(graph_rng, 30, 2, 3, 0.15);
    Rng rng(24);
    for (int i = 0; i < 200; ++i) {
        auto [q, positive] = sample_query(g, find_structure("inter3"), rng);
        std::set<std::pair<int, int>> atoms;  // (rel, anchor node) into the target
        for (const QueryEdge& e : q.edges) {
            const QueryNode& src = q.nodes[static_cast<std::size_t>(e.src)];
            CHECK(atoms.emplace(e.rel, src.node).second);
        }
    }
}

TEST_CASE("sampling an edgeless graph fails loudly", "[sampler]") {
    GraphBuilder b;
    const int T = b.add_type("T");
    b.add_node("a", T);
    b.add_node("b", T);
    TypedGraph g = b.finish();
    Rng rng(1);
    try {
        sample_query(g, find_structure("chain1"), rng);
        FAIL("expected SamplingError");
    } catch (const SamplingError& e) {
        CHECK(std::string(e.what()).find("chain1") != std::string::npos);
    }
}

TEST_CASE("standard negatives avoid members and respect the cap", "[sampler]") {
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
    TypedGraph g = b.finish();
    const int r = g.find_relation("r");

    QueryDag q;
    q.nodes = {{NodeKind::Anchor, g.find_node("v1"), S},
               {NodeKind::Anchor, g.find_node("v2"), S},
               {NodeKind::Target, -1, T}};
    q.edges = {{0, r, 2}, {1, r, 2}};
    q.structure = "inter2";

    Rng rng(9);
    // Denotation is {b}; negatives must come from {a,c,d}.
    const std::vector<int> all = standard_negatives(q, g, 10, rng);
    CHECK(all == std::vector<int>{g.find_node("a"), g.find_node("c"), g.find_node("d")});

    const std::vector<int> two = standard_negatives(q, g, 2, rng);
    CHECK(two.size() == 2);
    for (int v : two) CHECK(!denotation(q, g).contains(v));

    CHECK_THROWS_AS(standard_negatives(q, g, 0, rng), ArgumentError);

    // Degenerate: every typed node is a member.
    QueryDag c1;
    c1.nodes = {{NodeKind::Anchor, g.find_node("v1"), S}, {NodeKind::Target, -1, T}};
    c1.edges = {{0, r, 1}};
    c1.structure = "chain1";
    GraphBuilder b2;
    const int S2 = b2.add_type("S");
    const int T2 = b2.add_type("T");
    b2.add_node("hub", S2);
    b2.add_node("x", T2);
    b2.add_edge("hub", "r", "x");
    TypedGraph g2 = b2.finish();
    QueryDag q2;
    q2.nodes = {{NodeKind::Anchor, g2.find_node("hub"), S2}, {NodeKind::Target, -1, T2}};
    q2.edges = {{0, g2.find_relation("r"), 1}};
    q2.structure = "chain1";
    CHECK(standard_negatives(q2, g2, 5, rng).empty());
}

TEST_CASE("hard negatives are disjunctive-only satisfiers", "[sampler]") {
    // Two drugs: d1 treats x and y, d2 treats only y. Conjunction -> {y},
    // relaxation -> {x,y}, so x is the hard negative.
    GraphBuilder b;
    const int D = b.add_type("drug");
    const int Z = b.add_type("disease");
    b.add_node("d1", D);
    b.add_node("d2", D);
    b.add_node("x", Z);
    b.add_node("y", Z);
    b.add_edge("d1", "treats", "x");
    b.add_edge("d1", "treats", "y");
    b.add_edge("d2", "treats", "y");
    TypedGraph g = b.finish();
    const int treats = g.find_relation("treats");

    QueryDag q;
    q.nodes = {{NodeKind::Anchor, g.find_node("d1"), D},
               {NodeKind::Anchor, g.find_node("d2"), D},
               {NodeKind::Target, -1, Z}};
    q.edges = {{0, treats, 2}, {1, treats, 2}};
    q.structure = "inter2";

    Rng rng(5);
    auto hard = hard_negatives(q, g, 10, rng);
    REQUIRE(hard.has_value());
    CHECK(*hard == std::vector<int>{g.find_node("x")});

    // Identical branches: degenerate (empty but applicable).
    QueryDag same = q;
    same.nodes[1].node = g.find_node("d1");
    auto none = hard_negatives(same, g, 10, rng);
    REQUIRE(none.has_value());
    CHECK(none->empty());

    // Chains have no intersection: not applicable.
    QueryDag c1;
    c1.nodes = {{NodeKind::Anchor, g.find_node("d1"), D}, {NodeKind::Target, -1, Z}};
    c1.edges = {{0, treats, 1}};
    c1.structure = "chain1";
    CHECK(!hard_negatives(c1, g, 10, rng).has_value());
}

TEST_CASE("build_dataset honors counts and the deleted-edge guarantee", "[sampler][dataset]") {
    TypedGraph full = synthetic_graph("blocks:4,12,0.5,2,2", 77);
    GraphSplit split = split_edges(full, 0.1, 7);

    DatasetSpec spec;
    spec.seed = 11;
    spec.train_per_structure = 25;
    spec.valid_per_structure = 5;
    spec.test_per_structure = 10;
    spec.negative_pool = 50;
    spec.train_negative_pool = 8;
    spec.structures = {"chain1", "chain2", "inter2", "inter_chain"};

    Dataset ds = build_dataset(split, full, spec);

    // chain1 train = all train edges in both directions.
    const std::size_t chain1_train =
        std::count_if(ds.splits["train"].begin(), ds.splits["train"].end(),
                      [](const QueryExample& e) { return e.query.structure == "chain1"; });
    CHECK(chain1_train == split.train_graph.edge_count(true));

    // chain1 heldout = the deleted edges, 90/10 test/valid.
    const auto count_structure = [](const std::vector<QueryExample>& v, const char* s) {
        return std::count_if(v.begin(), v.end(),
                             [s](const QueryExample& e) { return e.query.structure == s; });
    };
    const std::size_t deleted = split.deleted_edges.size();
    CHECK(static_cast<std::size_t>(count_structure(ds.splits["test"], "chain1") +
                                   count_structure(ds.splits["valid"], "chain1")) == deleted);
    CHECK(static_cast<std::size_t>(count_structure(ds.splits["test"], "chain1")) ==
          (deleted * 9 + 9) / 10);

    // Other structures hit their requested counts on this fixture.
    for (const char* s : {"chain2", "inter2", "inter_chain"}) {
        CHECK(count_structure(ds.splits["train"], s) == 25);
        CHECK(count_structure(ds.splits["valid"], s) == 5);
        CHECK(count_structure(ds.splits["test"], s) == 10);
    }
    CHECK(ds.warnings.empty());

    // Soundness: train positives are train members; heldout positives are
    // full members unseen on the train graph. Negatives never members.
    for (const QueryExample& ex : ds.splits["train"]) {
        CHECK(denotation(ex.query, split.train_graph).contains(ex.positive));
        for (int v : ex.standard_negatives)
            CHECK(!denotation(ex.query, split.train_graph).contains(v));
    }
    for (const char* split_name : {"valid", "test"}) {
        for (const QueryExample& ex : ds.splits[split_name]) {
            CHECK(denotation(ex.query, full).contains(ex.positive));
            CHECK(!denotation(ex.query, split.train_graph).contains(ex.positive));
            const Denotation disj = denotation_disjunctive(ex.query, full);
            const Denotation conj = denotation(ex.query, full);
            for (int v : ex.hard_negatives) {
                CHECK(disj.contains(v));
                CHECK(!conj.contains(v));
            }
        }
    }
}

TEST_CASE("build_dataset warns instead of failing on infeasible structures", "[sampler]") {
    GraphBuilder b;
    const int T = b.add_type("T");
    b.add_node("a", T);
    b.add_node("b", T);
    b.add_edge("a", "r", "b");
    TypedGraph g = b.finish();
    GraphSplit fake{g, {}};  // nothing deleted

    DatasetSpec spec;
    spec.train_per_structure = 3;
    spec.valid_per_structure = 0;
    spec.test_per_structure = 0;
    spec.structures = {"inter3"};  // needs 3 distinct atoms into one node
    Dataset ds = build_dataset(fake, g, spec);
    CHECK(ds.splits["train"].empty());
    REQUIRE(!ds.warnings.empty());
    CHECK(ds.warnings.front().find("inter3") != std::string::npos);
}

TEST_CASE("datasets round-trip through NDJSON and stay deterministic", "[sampler][dataset]") {
    TypedGraph full = synthetic_graph("blocks:3,8,0.6,2,2", 3);
    GraphSplit split = split_edges(full, 0.15, 21);

    DatasetSpec spec;
    spec.seed = 5;
    spec.train_per_structure = 10;
    spec.valid_per_structure = 3;
    spec.test_per_structure = 4;
    spec.negative_pool = 20;
    spec.structures = {"chain1", "chain2", "inter2"};

    Dataset ds = build_dataset(split, full, spec);

    testutil::TempDir dir("dataset");
    CHECK(write_dataset(dir.path().string(), ds, full, spec));
    // Identical rerun: no bytes change.
    CHECK(!write_dataset(dir.path().string(), build_dataset(split, full, spec), full, spec));

    Dataset back = read_dataset(dir.path().string(), full);
    for (const char* split_name : {"train", "valid", "test"}) {
        REQUIRE(back.splits[split_name].size() == ds.splits[split_name].size());
        for (std::size_t i = 0; i < ds.splits[split_name].size(); ++i) {
            const QueryExample& a = ds.splits[split_name][i];
            const QueryExample& b2 = back.splits[split_name][i];
            CHECK(a.positive == b2.positive);
            CHECK(a.standard_negatives == b2.standard_negatives);
            CHECK(a.hard_negatives == b2.hard_negatives);
            CHECK(a.query.structure == b2.query.structure);
            CHECK(query_to_json(a.query, full) == query_to_json(b2.query, full));
        }
    }

    // Reading against a different graph is refused.
    TypedGraph other = synthetic_graph("blocks:3,8,0.6,2,2", 4);
    CHECK_THROWS_AS(read_dataset(dir.path().string(), other), DataError);
}
