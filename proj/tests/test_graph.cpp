#include <doctest.h>

#include <set>

#include "edgeprune/graph.hpp"

using namespace edgeprune;

namespace {

ModelConfig tiny_config(int layers, int heads) {
    ModelConfig c;
    c.n_layers = layers;
    c.n_heads = heads;
    c.d_model = 8 * heads;
    c.d_head = 8;
    c.d_mlp = 16;
    c.vocab_size = 11;
    c.max_seq = 8;
    return c;
}

// Brute-force oracle: every (writer, reader) pair where the writer's
// topological slot precedes the reader's, counted independently of the
// production enumeration.
int count_edges_oracle(const ModelConfig& c) {
    // topological slots: embed=0; layer l attention readers at 4l+1; head
    // outs at 4l+2; mlp-in at 4l+3; mlp-out at 4l+4; logits last.
    int total = 0;
    const auto writers_at_attn = [&](int l) { return 1 + l * (c.n_heads + 1); };
    for (int l = 0; l < c.n_layers; ++l) {
        total += 3 * c.n_heads * writers_at_attn(l);       // q,k,v slots per head
        total += writers_at_attn(l) + c.n_heads;           // mlp-in sees head outs too
    }
    total += 1 + c.n_layers * (c.n_heads + 1);             // logits reads all writers
    return total;
}

}  // namespace

TEST_CASE("edge counts match the brute-force enumeration oracle") {
    CHECK(enumerate_edges(tiny_config(1, 1)).size() == 8);
    CHECK(enumerate_edges(tiny_config(2, 2)).size() == 46);
    for (int l = 1; l <= 4; ++l)
        for (int h = 1; h <= 4; ++h) {
            ModelConfig c = tiny_config(l, h);
            CHECK(static_cast<int>(enumerate_edges(c).size()) == count_edges_oracle(c));
        }
}

TEST_CASE("enumeration respects the topological order") {
    for (int l = 1; l <= 3; ++l)
        for (int h = 1; h <= 3; ++h) {
            ModelConfig c = tiny_config(l, h);
            std::vector<Edge> edges = enumerate_edges(c);
            int prev_reader = 0;
            for (const Edge& e : edges) {
                const int wi = writer_index(c, e.src);
                const int ri = reader_index(c, e.dst);
                CHECK(wi < writers_before(c, e.dst));
                CHECK(ri >= prev_reader);  // readers in canonical order
                prev_reader = ri;
            }
            // round-trips through indices and names
            for (int w = 0; w < n_writers(c); ++w) {
                WriterId id = writer_from_index(c, w);
                CHECK(writer_index(c, id) == w);
                CHECK(writer_from_name(writer_name(id)).value() == id);
            }
            for (int r = 0; r < n_readers(c); ++r) {
                ReaderId id = reader_from_index(c, r);
                CHECK(reader_index(c, id) == r);
                CHECK(reader_from_name(reader_name(id)).value() == id);
            }
        }
}

TEST_CASE("graph edge lookup") {
    ModelConfig c = tiny_config(2, 2);
    ComputationalGraph g = make_graph(c);
    for (int i = 0; i < g.n_edges(); ++i)
        CHECK(g.edge_index(g.edge_src[i], g.edge_dst[i]) == i);
    // a writer that does not precede the reader is absent
    const int late_writer = writer_index(c, {WriterKind::MlpOut, 1, 0});
    const int early_reader = reader_index(c, {ReaderKind::HeadQ, 0, 0});
    CHECK(g.edge_index(late_writer, early_reader) == -1);
}

TEST_CASE("circuit intersection") {
    ModelConfig c = tiny_config(2, 2);
    ComputationalGraph g = make_graph(c);

    SUBCASE("identical circuits overlap fully") {
        Circuit a = circuit_from_edges(g, {0, 1, 2, 3}, "m");
        IntersectionResult res = circuit_intersection(g, a, a);
        CHECK(res.overlap_ratio == doctest::Approx(1.0f));
        CHECK(res.circuit.n_kept_edges() == 4);
    }

    SUBCASE("disjoint circuits") {
        Circuit a = circuit_from_edges(g, {0, 1}, "m");
        Circuit b = circuit_from_edges(g, {2, 3}, "m");
        IntersectionResult res = circuit_intersection(g, a, b);
        CHECK(res.overlap_ratio == 0.0f);
        CHECK(res.chance_factor == 0.0f);
    }

    SUBCASE("chance factor arithmetic") {
        // |a| = |b| = 10, |E| = 46, |a ∩ b| = 5 -> 5 / (100/46) = 2.3
        std::vector<int> ea, eb;
        for (int i = 0; i < 10; ++i) ea.push_back(i);
        for (int i = 5; i < 15; ++i) eb.push_back(i);
        IntersectionResult res =
            circuit_intersection(g, circuit_from_edges(g, ea, "m"), circuit_from_edges(g, eb, "m"));
        CHECK(res.circuit.n_kept_edges() == 5);
        CHECK(res.overlap_ratio == doctest::Approx(0.5f));
        CHECK(res.chance_factor == doctest::Approx(5.0 / (10.0 * 10.0 / 46.0)));
    }

    SUBCASE("different models are rejected") {
        Circuit a = circuit_from_edges(g, {0}, "model-a");
        Circuit b = circuit_from_edges(g, {0}, "model-b");
        CHECK_THROWS(circuit_intersection(g, a, b));
    }
}

TEST_CASE("circuit sparsity and active edges") {
    ModelConfig c = tiny_config(1, 1);
    ComputationalGraph g = make_graph(c);
    Circuit full = full_circuit(g, "m");
    CHECK(full.sparsity() == 0.0f);
    Circuit empty = empty_circuit(g, "m");
    CHECK(empty.sparsity() == 1.0f);

    // an edge whose source node is dropped is kept but inactive;
    // edges 5 and 6 are embed->logits and a0.h0->logits
    Circuit half = circuit_from_edges(g, {5, 6}, "m");
    REQUIRE(g.edge_src[5] != g.edge_src[6]);
    half.kept_nodes[g.edge_src[6]] = 0;
    CHECK(half.edge_active(g, 5));
    CHECK_FALSE(half.edge_active(g, 6));
    CHECK(half.active_edge_indices(g) == std::vector<int>{5});
}

TEST_CASE("config validation") {
    ModelConfig c = tiny_config(1, 2);
    c.d_model = 10;  // not d_head * heads
    CHECK_THROWS(c.validate());
    CHECK_THROWS(enumerate_edges(c));
}
