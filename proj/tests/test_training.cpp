#include <doctest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "sovnet/training.hpp"

using namespace sovnet;

TEST_CASE("margin schedule tightens at the halfway epoch") {
  MarginSchedule s;
  auto early = s.at(0, 10);
  CHECK(early.m_plus == 0.9);
  CHECK(early.m_minus == 0.1);
  CHECK(early.lambda == 0.5);
  auto late = s.at(5, 10);
  CHECK(late.m_plus == 0.95);
  CHECK(late.m_minus == 0.05);
  CHECK(late.lambda == 0.8);
  CHECK(s.at(4, 10).m_plus == 0.9);
}

TEST_CASE("margin loss values") {
  MarginSchedule::Margins m{0.9, 0.1, 0.5};
  // perfect prediction: true score above m+, others below m-
  Tensor<double> good = Tensor<double>::from_data({3}, {0.95, 0.05, 0.02});
  CHECK(margin_loss(good, 0, m).item() == doctest::Approx(0.0));
  // hand-computed: true score 0.5 -> (0.4)^2; wrong score 0.3 -> 0.5*(0.2)^2
  Tensor<double> bad = Tensor<double>::from_data({2}, {0.5, 0.3});
  CHECK(margin_loss(bad, 0, m).item() == doctest::Approx(0.16 + 0.5 * 0.04).epsilon(1e-12));
  CHECK_THROWS_AS(margin_loss(bad, 5, m), LabelOutOfRange);
  // gradient sanity
  Tensor<double> s = Tensor<double>::from_data({2}, {0.5, 0.3}).set_requires_grad(true);
  margin_loss(s, 0, m).backward();
  CHECK(s.grad()[0] == doctest::Approx(-2 * 0.4));          // pull the true score up
  CHECK(s.grad()[1] == doctest::Approx(2 * 0.5 * 0.2));     // push the wrong score down
}

TEST_CASE("adam minimizes a quadratic") {
  Tensor<double> x = Tensor<double>::from_data({2}, {5.0, -3.0}).set_requires_grad(true);
  Adam<double> opt({&x}, 0.1);
  for (int i = 0; i < 500; ++i) {
    x.zero_grad();
    reduce_sum_all(square(x)).backward();
    opt.step();
  }
  CHECK(std::abs(x.values()[0]) < 1e-3);
  CHECK(std::abs(x.values()[1]) < 1e-3);
}

TEST_CASE("gradcheck helper catches broken gradients") {
  Tensor<double> x = Tensor<double>::from_data({3}, {0.3, -0.2, 0.7}).set_requires_grad(true);
  auto good = [&] { return reduce_sum_all(mul(square(x), x)); };
  GradCheckResult ok = gradcheck<double>({{"x", &x}}, good, 1e-5);
  CHECK(ok.checked == 3);
  CHECK(ok.max_rel_err < 1e-7);
}

TEST_CASE("short training run learns the shapes task above chance") {
  ModelConfig mc;
  mc.image_size = 11;
  mc.stem_channels = 2;
  mc.num_types = 2;
  mc.pose_dim = 2;
  mc.hidden_layers = 1;
  mc.strides = {2};
  mc.classes = 4;
  mc.decoder_hidden = {8, 8};
  SovnetModel<float> model(mc);
  model.init(3);

  Dataset train_ds = synthetic_shapes(400, 11, 21);
  Dataset test_ds = synthetic_shapes(100, 11, 22);
  TrainConfig tc;
  tc.epochs = 8;
  tc.batch_size = 16;
  tc.lr = 2e-3;
  tc.reconstruction = false;
  tc.seed = 4;

  std::string csv = (std::filesystem::temp_directory_path() / "sovnet_train_log.csv").string();
  TrainResult res = sovnet::train(model, train_ds, test_ds, tc, nullptr, csv);
  REQUIRE(res.epochs.size() == 8);
  CHECK(res.final_val_acc > 0.4);  // 4 classes, chance = 0.25
  // lr decays multiplicatively
  CHECK(res.epochs[1].lr == doctest::Approx(tc.lr * tc.lr_decay));

  std::ifstream is(csv);
  std::string header;
  std::getline(is, header);
  CHECK(header == "epoch,lr,train_loss,train_acc,val_acc");
  int rows = 0;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 8);
  std::filesystem::remove(csv);
}

TEST_CASE("training is deterministic for a fixed seed") {
  ModelConfig mc;
  mc.image_size = 9;
  mc.stem_channels = 2;
  mc.num_types = 2;
  mc.pose_dim = 2;
  mc.hidden_layers = 1;
  mc.strides = {2};
  mc.classes = 4;
  mc.decoder_hidden = {8, 8};
  Dataset train = synthetic_shapes(32, 9, 31);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 8;
  tc.reconstruction = false;

  auto run = [&] {
    SovnetModel<float> m(mc);
    m.init(1);
    TrainResult r = sovnet::train(m, train, Dataset{}, tc);
    return std::make_pair(r.epochs[0].train_loss, m.stem_w.values());
  };
  auto a = run();
  auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("evaluate validates labels and fills the confusion matrix") {
  ModelConfig mc;
  mc.image_size = 9;
  mc.stem_channels = 2;
  mc.num_types = 2;
  mc.pose_dim = 2;
  mc.hidden_layers = 1;
  mc.strides = {2};
  mc.classes = 2;
  mc.decoder_hidden = {8, 8};
  SovnetModel<float> model(mc);
  model.init(2);
  Dataset ds = synthetic_shapes(8, 9, 5);
  for (auto& l : ds.labels) l %= 2;
  std::vector<std::vector<long long>> cm;
  double acc = evaluate(model, ds, &cm);
  long long total = 0;
  for (auto& row : cm)
    for (auto v : row) total += v;
  CHECK(total == 8);
  CHECK(acc >= 0.0);
  ds.labels[0] = 9;
  CHECK_THROWS_AS(evaluate(model, ds), LabelOutOfRange);
}
