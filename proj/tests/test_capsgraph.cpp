#include <doctest.h>

#include <random>
#include <sstream>

#include "sovnet/capsgraph.hpp"

using namespace sovnet;

namespace {

ModelConfig tiny_config() {
  ModelConfig mc;
  mc.image_size = 9;
  mc.stem_channels = 2;
  mc.num_types = 2;
  mc.pose_dim = 2;
  mc.hidden_layers = 2;
  mc.strides = {2, 2};
  mc.classes = 3;
  mc.decoder_hidden = {8, 8};
  return mc;
}

template <typename T>
Tensor<T> random_image(const ModelConfig& mc, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<T> v(static_cast<std::size_t>(mc.in_channels) * mc.image_size * mc.image_size);
  for (auto& x : v) x = static_cast<T>(u(rng));
  return Tensor<T>::from_data({static_cast<std::size_t>(mc.in_channels),
                               static_cast<std::size_t>(mc.image_size),
                               static_cast<std::size_t>(mc.image_size)},
                              std::move(v), false);
}

}  // namespace

TEST_CASE("build_graph: vertices are thresholded pose norms, edges match the pairwise oracle") {
  ModelConfig mc = tiny_config();
  SovnetModel<double> model(mc);
  model.init(21);
  std::mt19937_64 rng(22);
  NoGradGuard ng;
  ForwardTrace<double> tr = model.forward(random_image<double>(mc, rng));

  const double threshold = 0.02;
  CapsuleGraph g = build_graph(tr, mc, threshold);
  REQUIRE(g.grids.size() == 4);
  CHECK(!g.vertices.empty());
  CHECK(!g.edges.empty());
  for (const auto& v : g.vertices) CHECK(v.activation > threshold);

  // vertex activations agree with a direct norm computation
  for (const auto& v : g.vertices) {
    const auto& field = tr.layers[v.layer].fields[v.type];
    int S = static_cast<int>(field.shape()[1]);
    int H = static_cast<int>(field.shape()[2]);
    int W = static_cast<int>(field.shape()[3]);
    double n2 = 0;
    for (std::size_t d = 0; d < field.shape()[0]; ++d)
      n2 += field.values()[((d * S + v.s) * H + v.y) * W + v.x] *
            field.values()[((d * S + v.s) * H + v.y) * W + v.x];
    CHECK(std::abs(v.activation - std::sqrt(n2)) < 1e-12);
  }

  // edge count equals the independent pairwise-membership count
  CHECK(static_cast<long long>(g.edges.size()) == expected_edge_count(g, threshold));

  // every edge weight is the recorded routing coefficient
  for (const auto& e : g.edges) {
    const auto& w = tr.layers[e.layer + 1].weights[e.j];
    int S = static_cast<int>(w.shape()[1]);
    int H = static_cast<int>(w.shape()[2]);
    int W = static_cast<int>(w.shape()[3]);
    CHECK(e.weight ==
          w.values()[((static_cast<std::size_t>(e.i) * S + e.s2) * H + e.y2) * W + e.x2]);
  }
}

TEST_CASE("decomposition graphs of rotated inputs are isomorphic via the witness map") {
  for (GroupKind kind : {GroupKind::p4, GroupKind::p4m}) {
    ModelConfig mc = tiny_config();
    mc.group = kind;
    SovnetModel<double> model(mc);
    model.init(23);
    std::mt19937_64 rng(24);
    NoGradGuard ng;
    Tensor<double> img = random_image<double>(mc, rng);
    CapsuleGraph base = build_graph(model.forward(img), mc, 0.02);
    for (int s = 0; s < stabilizer_size(kind); ++s) {
      GroupElement h = stabilizer_element(kind, s);
      Tensor<double> moved = left_translate_plane(img, h, mc.image_size, mc.image_size);
      CapsuleGraph rot = build_graph(model.forward(moved), mc, 0.02);
      IsomorphismReport rep = check_isomorphism(rot, base, h, 1e-10);
      INFO(rep.failure);
      CHECK(rep.isomorphic);
      CHECK(rep.vertices_checked == base.vertices.size());
      CHECK(rep.edges_checked == base.edges.size());
    }
  }
}

TEST_CASE("the witness check detects a perturbed graph") {
  ModelConfig mc = tiny_config();
  SovnetModel<double> model(mc);
  model.init(25);
  std::mt19937_64 rng(26);
  NoGradGuard ng;
  Tensor<double> img = random_image<double>(mc, rng);
  CapsuleGraph base = build_graph(model.forward(img), mc, 0.02);

  CapsuleGraph tampered = base;
  tampered.vertices[0].activation += 1.0;
  IsomorphismReport rep =
      check_isomorphism(tampered, base, identity_element(mc.group), 1e-10);
  CHECK_FALSE(rep.isomorphic);

  CapsuleGraph missing = base;
  missing.vertices.pop_back();
  CHECK_FALSE(check_isomorphism(missing, base, identity_element(mc.group), 1e-10).isomorphic);
}

TEST_CASE("graph text export round-trips") {
  ModelConfig mc = tiny_config();
  SovnetModel<double> model(mc);
  model.init(27);
  std::mt19937_64 rng(28);
  NoGradGuard ng;
  CapsuleGraph g = build_graph(model.forward(random_image<double>(mc, rng)), mc, 0.05);

  std::stringstream ss;
  export_graph(g, ss);
  CapsuleGraph back = import_graph(ss);
  REQUIRE(back.vertices.size() == g.vertices.size());
  REQUIRE(back.edges.size() == g.edges.size());
  for (std::size_t i = 0; i < g.vertices.size(); ++i) {
    CHECK(back.vertices[i].layer == g.vertices[i].layer);
    CHECK(back.vertices[i].s == g.vertices[i].s);
    // 17 significant digits: doubles survive the round-trip exactly
    CHECK(back.vertices[i].activation == g.vertices[i].activation);
  }
  for (std::size_t i = 0; i < g.edges.size(); ++i)
    CHECK(back.edges[i].weight == g.edges[i].weight);

  std::stringstream bad("X 1 2 3\n");
  CHECK_THROWS_AS(import_graph(bad), TruncatedFile);
}
