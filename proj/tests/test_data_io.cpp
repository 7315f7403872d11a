#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "lzn/config.hpp"
#include "lzn/data.hpp"
#include "lzn/io.hpp"

namespace lzn {
namespace {

namespace fs = std::filesystem;

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("lzn_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  static std::string slurp(const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
  }

  fs::path dir_;
};

TEST(Datasets, SingleGaussianHasOneLabel) {
  DatasetSpec spec;
  spec.components = 1;
  spec.count = 500;
  const Dataset ds = make_dataset(spec);
  EXPECT_EQ(ds.classes, 1u);
  for (auto l : ds.labels) EXPECT_EQ(l, 0u);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    mx += ds.points.at(i, 0);
    my += ds.points.at(i, 1);
  }
  EXPECT_NEAR(mx / 500.0, 0.0, 0.05);
  EXPECT_NEAR(my / 500.0, 0.0, 0.05);
}

TEST(Datasets, NoiselessMoonsLieOnHalfCircles) {
  DatasetSpec spec;
  spec.kind = DatasetKind::TwoMoons;
  spec.noise = 0.0;
  spec.count = 400;
  const Dataset ds = make_dataset(spec);
  EXPECT_EQ(ds.classes, 2u);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    // Undo the centring, then check the distance to the moon's circle centre.
    const double x = ds.points.at(i, 0) + 0.5, y = ds.points.at(i, 1) + 0.25;
    if (ds.labels[i] == 0) {
      EXPECT_NEAR(std::hypot(x, y), 1.0, 1e-12);
      EXPECT_GE(y, -1e-12);
    } else {
      EXPECT_NEAR(std::hypot(x - 1.0, y - 0.5), 1.0, 1e-12);
      EXPECT_LE(y, 0.5 + 1e-12);
    }
  }
}

TEST(Datasets, RingsHaveConfiguredRadii) {
  DatasetSpec spec;
  spec.kind = DatasetKind::Rings;
  spec.noise = 0.0;
  spec.radius = 1.5;
  spec.components = 3;
  spec.count = 90;
  const Dataset ds = make_dataset(spec);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_NEAR(std::hypot(ds.points.at(i, 0), ds.points.at(i, 1)), 1.5 * static_cast<double>(ds.labels[i] + 1), 1e-12);
  }
}

TEST(Datasets, GenerationIsPureInSpec) {
  for (auto kind : {DatasetKind::GaussMix, DatasetKind::TwoMoons, DatasetKind::Rings}) {
    DatasetSpec spec;
    spec.kind = kind;
    spec.seed = 42;
    const Dataset a = make_dataset(spec), b = make_dataset(spec);
    ASSERT_EQ(a.points.numel(), b.points.numel());
    EXPECT_EQ(std::memcmp(a.points.data().data(), b.points.data().data(), a.points.numel() * sizeof(double)), 0);
    EXPECT_EQ(a.labels, b.labels);
    spec.seed = 43;
    EXPECT_NE(make_dataset(spec).points[0], a.points[0]);
  }
}

TEST(Datasets, BalancedLabelsAndValidation) {
  DatasetSpec spec;
  spec.count = 10;
  spec.components = 4;
  const Dataset ds = make_dataset(spec);
  EXPECT_NO_THROW(ds.validate());
  std::vector<std::size_t> counts(4, 0);
  for (auto l : ds.labels) ++counts[l];
  EXPECT_EQ(counts, (std::vector<std::size_t>{3, 3, 2, 2}));
  spec.count = 0;
  EXPECT_THROW(make_dataset(spec), DomainError);
  spec.count = 10;
  spec.noise = -1.0;
  EXPECT_THROW(make_dataset(spec), DomainError);
  EXPECT_THROW(parse_dataset_kind("spiral"), DomainError);
}

TEST(Augment, PreservesShapeAndStatistics) {
  Rng rng(1);
  const Tensor batch = Tensor::zeros({20000, 2});
  const Tensor j = Augmentor::jitter(0.3).apply(batch, rng);
  EXPECT_EQ(j.shape(), batch.shape());
  double ss = 0.0;
  for (double x : j.data()) ss += x * x;
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(j.numel())), 0.3, 0.005);
  EXPECT_EQ(Augmentor::identity().apply(batch, rng).shape(), batch.shape());
}

TEST(Augment, RotationKeepsNormsAndBoundsAngle) {
  Rng rng(2);
  std::vector<double> v;
  for (int i = 0; i < 500; ++i) v.insert(v.end(), {2.0, 0.0});
  const Tensor out = Augmentor::rotation(0.4).apply(Tensor::matrix(500, 2, v), rng);
  for (std::size_t i = 0; i < 500; ++i) {
    EXPECT_NEAR(std::hypot(out.at(i, 0), out.at(i, 1)), 2.0, 1e-12);
    EXPECT_LE(std::abs(std::atan2(out.at(i, 1), out.at(i, 0))), 0.4 + 1e-12);
  }
  EXPECT_THROW(Augmentor::rotation(0.4).apply(Tensor::zeros({2, 3}), rng), ShapeError);
}

TEST(Augment, ComposeAppliesInOrder) {
  Rng a(3), b(3);
  const Tensor x = Tensor::matrix(1, 2, {1.0, 0.0});
  const Tensor composed =
      Augmentor::compose({Augmentor::rotation(std::numbers::pi), Augmentor::jitter(0.1)}).apply(x, a);
  const Tensor manual = Augmentor::jitter(0.1).apply(Augmentor::rotation(std::numbers::pi).apply(x, b), b);
  EXPECT_EQ(composed[0], manual[0]);
  EXPECT_EQ(composed[1], manual[1]);
}

TEST(Batches, DistinctIndicesInRange) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    auto idx = sample_batch(30, 12, rng);
    ASSERT_EQ(idx.size(), 12u);
    std::sort(idx.begin(), idx.end());
    EXPECT_EQ(std::adjacent_find(idx.begin(), idx.end()), idx.end());
    EXPECT_LT(idx.back(), 30u);
  }
  EXPECT_EQ(sample_batch(5, 9, rng).size(), 5u);
}

TEST_F(TempDir, CheckpointRoundTripIsBitExact) {
  Rng rng(5);
  std::vector<NamedTensor> tensors{{"a", rng.normal_tensor({3, 4})},
                                   {"scalar", Tensor::scalar(std::nextafter(1.0, 2.0))},
                                   {"vec", Tensor::vector({-0.0, 1e-310, -1e300})},
                                   {"empty", Tensor::zeros({0, 5})}};
  save_checkpoint(path("c.bin"), tensors);
  const auto back = load_checkpoint(path("c.bin"));
  ASSERT_EQ(back.size(), tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    EXPECT_EQ(back[i].name, tensors[i].name);
    EXPECT_EQ(back[i].value.shape(), tensors[i].value.shape());
    EXPECT_EQ(std::memcmp(back[i].value.data().data(), tensors[i].value.data().data(),
                          tensors[i].value.numel() * sizeof(double)),
              0);
  }
}

TEST_F(TempDir, CheckpointLayoutIsAsDocumented) {
  save_checkpoint(path("c.bin"), {{"ab", Tensor::vector({1.5})}});
  const std::string bytes = slurp(path("c.bin"));
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 4 + 2 + 4 + 8 + 8);
  EXPECT_EQ(bytes.substr(0, 4), "LZNC");
  auto u32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int k = 3; k >= 0; --k) v = (v << 8) | static_cast<unsigned char>(bytes[at + static_cast<std::size_t>(k)]);
    return v;
  };
  EXPECT_EQ(u32(4), 1u);   // version
  EXPECT_EQ(u32(8), 1u);   // count
  EXPECT_EQ(u32(12), 2u);  // name length
  EXPECT_EQ(bytes.substr(16, 2), "ab");
  EXPECT_EQ(u32(18), 1u);  // rank
  EXPECT_EQ(u32(22), 1u);  // dim (low word)
  double payload = 0.0;
  std::memcpy(&payload, bytes.data() + 30, 8);
  EXPECT_EQ(payload, 1.5);
}

TEST_F(TempDir, EmptyCheckpointIsValid) {
  save_checkpoint(path("e.bin"), {});
  EXPECT_EQ(slurp(path("e.bin")).size(), 12u);
  EXPECT_TRUE(load_checkpoint(path("e.bin")).empty());
}

TEST_F(TempDir, CorruptCheckpointsAreRejected) {
  save_checkpoint(path("c.bin"), {{"w", Tensor::matrix(2, 2, {1, 2, 3, 4})}});
  std::string bytes = slurp(path("c.bin"));
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream os(path(name), std::ios::binary);
    os << content;
    return path(name);
  };
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(load_checkpoint(write("m.bin", bad_magic)), FormatError);
  std::string bad_version = bytes;
  bad_version[4] = 2;
  EXPECT_THROW(load_checkpoint(write("v.bin", bad_version)), FormatError);
  for (std::size_t cut : {0u, 3u, 11u, 14u, 20u, 40u}) {
    EXPECT_THROW(load_checkpoint(write("t.bin", bytes.substr(0, cut))), FormatError) << cut;
  }
  EXPECT_THROW(load_checkpoint(write("x.bin", bytes + "z")), FormatError);
  EXPECT_THROW(load_checkpoint(path("missing.bin")), IoError);
}

TEST_F(TempDir, AssignParametersChecksNamesAndShapes) {
  const Tensor w = Tensor::zeros({2, 2});
  assign_parameters({{"w", w}}, {{"w", Tensor::matrix(2, 2, {1, 2, 3, 4})}, {"extra", Tensor::scalar(1)}});
  EXPECT_EQ(w.at(1, 1), 4.0);
  EXPECT_THROW(assign_parameters({{"w", w}}, {{"v", Tensor::zeros({2, 2})}}), FormatError);
  EXPECT_THROW(assign_parameters({{"w", w}}, {{"w", Tensor::zeros({4})}}), FormatError);
}

TEST_F(TempDir, SamplesCsvFormats) {
  const Tensor pts = Tensor::matrix(2, 2, {0.1, -2.0, 1.0 / 3.0, 5e-300});
  write_samples(path("s.csv"), pts);
  EXPECT_EQ(slurp(path("s.csv")), "x0,x1\n0.1,-2\n0.3333333333333333,5e-300\n");
  write_labeled_samples(path("l.csv"), pts, {1, 0});
  EXPECT_EQ(slurp(path("l.csv")).substr(0, 14), "x0,x1,label\n0.");
  write_samples(path("z.csv"), Tensor::zeros({0, 3}));
  EXPECT_EQ(slurp(path("z.csv")), "x0,x1,x2\n");
  write_labeled_samples(path("zl.csv"), Tensor::zeros({0, 2}), {});
  EXPECT_EQ(slurp(path("zl.csv")), "x0,x1,label\n");
}

TEST_F(TempDir, SamplesRoundTripLosslessly) {
  Rng rng(6);
  const Tensor pts = rng.normal_tensor({50, 3});
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 50; ++i) labels.push_back(i % 3);
  write_labeled_samples(path("s.csv"), pts, labels);
  const Dataset ds = read_samples(path("s.csv"));
  EXPECT_EQ(ds.labels, labels);
  EXPECT_EQ(ds.classes, 3u);
  for (std::size_t i = 0; i < pts.numel(); ++i) EXPECT_EQ(ds.points[i], pts[i]);
  std::ofstream(path("bad.csv")) << "x0,x1\n1,2\n3\n";
  EXPECT_THROW(read_samples(path("bad.csv")), FormatError);
  std::ofstream(path("bad2.csv")) << "x0,x1\n1,abc\n";
  EXPECT_THROW(read_samples(path("bad2.csv")), FormatError);
}

TEST_F(TempDir, MetricsHeaderAndAppend) {
  MetricLog rows{{1, 0.5, 0.25, 0.25, 2.0, 0.0}, {2, 0.4, 0.2, 0.2, 1.0, 0.0}};
  write_metrics(path("m.csv"), rows);
  const std::string first = slurp(path("m.csv"));
  EXPECT_EQ(first, "iter,loss_total,loss_rf,loss_align,grad_norm,wall_ms\n1,0.5,0.25,0.25,2,0\n2,0.4,0.2,0.2,1,0\n");
  write_metrics(path("m.csv"), {{3, 0.3, 0.1, 0.2, 0.5, 0.0}}, true);
  EXPECT_EQ(slurp(path("m.csv")), first + "3,0.3,0.1,0.2,0.5,0\n");
  write_metrics(path("new.csv"), {}, true);
  EXPECT_EQ(slurp(path("new.csv")), "iter,loss_total,loss_rf,loss_align,grad_norm,wall_ms\n");
  EXPECT_THROW(write_metrics((dir_ / "no" / "such" / "m.csv").string(), rows), IoError);
}

TEST(Config, DefaultsAndOverrides) {
  const RunConfig c = parse_run_config(R"(# comment
[data]
kind = two_moons
count = 300
noise = 0.05

[model]
latent_dim = 4
encoder_hidden = 32, 16
activation = relu

[train]
iterations = 10
lr_encoder = 2.5e-5
use_log = true

[flow]
alpha = 0.45
solver = midpoint
checkpoint = recompute_velocity
steps = 50
cutoff = 10
)");
  EXPECT_EQ(c.data.kind, DatasetKind::TwoMoons);
  EXPECT_EQ(c.data.count, 300u);
  EXPECT_EQ(c.data.noise, 0.05);
  EXPECT_EQ(c.model.latent_dim, 4u);
  EXPECT_EQ(c.model.encoder_hidden, (std::vector<std::size_t>{32, 16}));
  EXPECT_EQ(c.model.decoder_hidden, (std::vector<std::size_t>{256, 256, 256, 256}));
  EXPECT_EQ(c.model.activation, Activation::Relu);
  EXPECT_EQ(c.train.iterations, 10u);
  EXPECT_EQ(c.train.lr_encoder, 2.5e-5);
  EXPECT_TRUE(c.train.use_log);
  EXPECT_TRUE(c.use_log_set);
  EXPECT_TRUE(c.alpha_set);
  EXPECT_EQ(c.train.flow.alpha, 0.45);
  EXPECT_EQ(c.train.flow.solver, Solver::Midpoint);
  EXPECT_EQ(c.train.flow.checkpoint, CheckpointMode::RecomputeVelocity);
  EXPECT_EQ(c.train.clip, 1.0);
  EXPECT_EQ(c.train.adam.beta2, 0.999);
}

TEST(Config, TextRoundTrip) {
  RunConfig c = parse_run_config("[train]\nseed = 9\nuse_log = false\n[flow]\nguard = 0.01\n[eval]\nclassify_alpha = 0.25\n");
  const RunConfig back = parse_run_config(to_text(c));
  EXPECT_EQ(to_text(back), to_text(c));
  EXPECT_EQ(back.train.seed, 9u);
  EXPECT_EQ(back.train.flow.guard, 0.01);
  EXPECT_FALSE(back.alpha_set);
  EXPECT_TRUE(back.use_log_set);
}

TEST(Config, ErrorsNameTheProblem) {
  auto message = [](const std::string& text) {
    try {
      parse_run_config(text, "x.cfg");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("[train]\nbogus = 1\n").find("train.bogus"), std::string::npos);
  EXPECT_NE(message("[nosuch]\nkey = 1\n").find("nosuch.key"), std::string::npos);
  EXPECT_NE(message("[train]\niterations = ten\n").find("train.iterations"), std::string::npos);
  EXPECT_NE(message("[flow]\nsolver = rk4\n").find("flow.solver"), std::string::npos);
  EXPECT_NE(message("[flow]\nguard = 2\n").find("x.cfg"), std::string::npos);
  EXPECT_NE(message("[train]\nclip = 0\n").find("clip"), std::string::npos);
  EXPECT_NE(message("[train\n").find("x.cfg:1"), std::string::npos);
  EXPECT_NE(message("[train]\nbatch = 1\nbatch = 2\n").find("x.cfg"), std::string::npos);
  EXPECT_THROW(load_run_config("/no/such/file.cfg"), ConfigError);
}

}  // namespace
}  // namespace lzn
