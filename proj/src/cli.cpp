#include "lzn/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>

#include "lzn/config.hpp"
#include "lzn/grad_check.hpp"
#include "lzn/io.hpp"
#include "lzn/metrics.hpp"
#include "lzn/training.hpp"

namespace lzn {
namespace {

namespace fs = std::filesystem;

// Independent streams derived from the run seed.
std::uint64_t init_seed(std::uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ULL; }
std::uint64_t eval_seed(std::uint64_t seed) { return seed ^ 0xd1b54a32d192ed03ULL; }

enum class ModelKind { Plain = 0, Generative = 1, Representation = 2, Joint = 3 };

struct Models {
  ModelKind kind = ModelKind::Plain;
  MlpEncoder encoder;
  RectifiedFlowDecoder decoder;
  LabelCodebook codebook;

  bool has_encoder() const { return kind != ModelKind::Plain; }
  bool has_decoder() const { return kind != ModelKind::Representation; }
  bool has_codebook() const { return kind == ModelKind::Joint; }

  std::vector<NamedTensor> parameters() const {
    std::vector<NamedTensor> out;
    auto add = [&](const std::vector<NamedTensor>& p) { out.insert(out.end(), p.begin(), p.end()); };
    if (has_encoder()) add(encoder.parameters());
    if (has_decoder()) add(decoder.parameters());
    if (has_codebook()) add(codebook.parameters());
    return out;
  }
};

std::size_t class_count(const DatasetSpec& spec) {
  return spec.kind == DatasetKind::TwoMoons ? 2 : spec.components;
}

Models build_models(const RunConfig& cfg, ModelKind kind, std::uint64_t seed) {
  Rng init(init_seed(seed));
  const ModelConfig& m = cfg.model;
  const std::size_t d = 2, q = m.latent_dim, c = class_count(cfg.data);
  Models out;
  out.kind = kind;
  if (out.has_encoder()) out.encoder = MlpEncoder(d, m.encoder_hidden, q, init, m.activation);
  if (out.has_decoder()) {
    const std::size_t zq = kind == ModelKind::Plain ? 0 : q;
    const std::size_t zc = kind == ModelKind::Joint ? c : 0;
    out.decoder = RectifiedFlowDecoder(d, zq, zc, m.decoder_hidden, init, m.activation);
  }
  if (out.has_codebook()) out.codebook = LabelCodebook(c, q, init);
  return out;
}

void save_models(const std::string& path, const Models& models) {
  auto tensors = models.parameters();
  tensors.push_back({"meta.kind", Tensor::scalar(static_cast<double>(models.kind))});
  save_checkpoint(path, tensors);
}

Models load_models(const std::string& path, const RunConfig& cfg) {
  const auto tensors = load_checkpoint(path);
  double kind = -1.0;
  for (const auto& t : tensors) {
    if (t.name == "meta.kind" && t.value.numel() == 1) kind = t.value[0];
  }
  if (kind != 0.0 && kind != 1.0 && kind != 2.0 && kind != 3.0) {
    throw FormatError("checkpoint '" + path + "' has no valid meta.kind entry");
  }
  Models models = build_models(cfg, static_cast<ModelKind>(static_cast<int>(kind)), 0);
  try {
    assign_parameters(models.parameters(), tensors);
  } catch (const FormatError& e) {
    throw FormatError("checkpoint '" + path + "' does not match the config model: " + e.what());
  }
  return models;
}

Tensor shuffled_rows(const Tensor& x, Rng& rng) {
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng.engine());
  const std::size_t q = x.cols();
  std::vector<double> v;
  v.reserve(x.numel());
  for (auto i : order) v.insert(v.end(), x.data().begin() + static_cast<std::ptrdiff_t>(i * q),
                                x.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * q));
  return Tensor::matrix(x.rows(), q, std::move(v));
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

Tensor circle_anchors(std::size_t n, double radius) {
  std::vector<double> v;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    v.insert(v.end(), {radius * std::cos(a), radius * std::sin(a)});
  }
  return Tensor::matrix(n, 2, std::move(v));
}

// Options shared by every subcommand.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::size_t threads = 1;
};

struct Context {
  RunConfig cfg;
  std::uint64_t seed = 0;
  fs::path out;
  std::ostream& log;

  std::string path(const std::string& name) const { return (out / name).string(); }
};

Context open_context(const Common& common, std::ostream& log) {
  Context ctx{load_run_config(common.config), 0, fs::path(common.out), log};
  if (common.seed) ctx.cfg.train.seed = *common.seed;
  ctx.seed = ctx.cfg.train.seed;
  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  if (ec || !fs::is_directory(ctx.out)) throw IoError("cannot create output directory '" + common.out + "'");
  return ctx;
}

void write_report(const Context& ctx, const std::string& name, const std::vector<std::pair<std::string, double>>& kv) {
  std::vector<std::string> header;
  std::vector<double> row;
  for (const auto& [k, v] : kv) {
    header.push_back(k);
    row.push_back(v);
    ctx.log << k << " " << format_double(v) << "\n";
  }
  write_table(ctx.path(name), header, {row});
}

void write_run_files(const Context& ctx, const Models& models, const MetricLog& log) {
  save_models(ctx.path("checkpoint.lznc"), models);
  write_metrics(ctx.path("metrics.csv"), log);
  std::ofstream cfg_out(ctx.path("config.cfg"));
  cfg_out << to_text(ctx.cfg);
  if (!cfg_out) throw IoError("cannot write '" + ctx.path("config.cfg") + "'");
}

FlowConfig with_alpha(FlowConfig flow, double alpha) {
  flow.alpha = alpha;
  return flow;
}

// Conditional samples of every class are pooled and shuffled before
// classification, so inference batches have the class mix of real data.
double conditional_consistency(const Models& m, const RunConfig& cfg, Rng& rng) {
  const std::size_t c = m.codebook.classes();
  const std::size_t per_class = std::max<std::size_t>(1, cfg.eval.samples / c);
  Dataset pooled;
  pooled.classes = c;
  std::vector<double> v;
  for (std::size_t k = 0; k < c; ++k) {
    const Generated g = generate_conditional(m.decoder, m.codebook, k, per_class, cfg.eval.rf_steps, cfg.train.flow, rng);
    v.insert(v.end(), g.points.data().begin(), g.points.data().end());
    pooled.labels.insert(pooled.labels.end(), g.labels.begin(), g.labels.end());
  }
  pooled.points = Tensor::matrix(per_class * c, m.decoder.data_dim(), std::move(v));
  std::vector<std::size_t> order(pooled.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng.engine());
  const Dataset mixed = pooled.subset(order);
  const FlowConfig cls_flow = with_alpha(cfg.train.flow, cfg.eval.classify_alpha);
  return accuracy(classify(mixed.points, m.encoder, m.codebook, cls_flow, cfg.eval.inference_batch, rng), mixed.labels);
}

int cmd_train_gen(const Context& ctx, bool plain) {
  const RunConfig& cfg = ctx.cfg;
  const Dataset train = make_dataset(cfg.data);
  const Dataset test = make_dataset(cfg.test_spec());
  Models m = build_models(cfg, plain ? ModelKind::Plain : ModelKind::Generative, ctx.seed);
  const MetricLog log = train_unconditional(train, plain ? nullptr : &m.encoder, m.decoder, cfg.train);
  write_run_files(ctx, m, log);

  Rng rng(eval_seed(ctx.seed));
  const Generated g = generate_unconditional(m.decoder, nullptr, cfg.eval.samples, cfg.eval.rf_steps, cfg.train.flow, rng);
  write_samples(ctx.path("samples.csv"), g.points);
  std::vector<std::pair<std::string, double>> report{{"final_loss", log.back().loss_total},
                                                     {"energy_distance", energy_distance(g.points, test.points)}};
  if (!plain) {
    NoGradScope no_grad;
    const Tensor z = compute_latents(m.encoder.encode(test.points), cfg.train.flow, rng);
    const auto true_z = rf_reconstruct(m.decoder, test.points, z, Tensor(), cfg.eval.recon_steps);
    const auto other_z = rf_reconstruct(m.decoder, test.points, shuffled_rows(z, rng), Tensor(), cfg.eval.recon_steps);
    report.emplace_back("recon_true_z", mean(true_z.second));
    report.emplace_back("recon_shuffled_z", mean(other_z.second));
  }
  write_report(ctx, "report.csv", report);
  return kExitOk;
}

int cmd_train_repr(Context& ctx) {
  RunConfig& cfg = ctx.cfg;
  if (!cfg.alpha_set) cfg.train.flow.alpha = 0.45;
  if (!cfg.use_log_set) cfg.train.use_log = true;
  const Dataset train = make_dataset(cfg.data);
  const Dataset test = make_dataset(cfg.test_spec());
  Models m = build_models(cfg, ModelKind::Representation, ctx.seed);
  ProbeOptions probe;
  probe.seed = eval_seed(ctx.seed);
  double baseline = 0.0;
  {
    NoGradScope no_grad;
    baseline = linear_probe(m.encoder.encode(test.points), test.labels, probe);
  }
  const MetricLog log = train_representation(train, m.encoder, cfg.augment.build(), cfg.train);
  write_run_files(ctx, m, log);
  NoGradScope no_grad;
  const double acc = linear_probe(m.encoder.encode(test.points), test.labels, probe);
  write_report(ctx, "report.csv",
               {{"final_loss", log.back().loss_total}, {"probe_accuracy", acc}, {"baseline_probe_accuracy", baseline}});
  return kExitOk;
}

int cmd_train_joint(const Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const Dataset train = make_dataset(cfg.data);
  const Dataset test = make_dataset(cfg.test_spec());
  Models m = build_models(cfg, ModelKind::Joint, ctx.seed);
  const MetricLog log = train_joint(train, m.encoder, m.decoder, m.codebook, cfg.train);
  write_run_files(ctx, m, log);

  Rng rng(eval_seed(ctx.seed));
  const auto pred = classify(test.points, m.encoder, m.codebook, with_alpha(cfg.train.flow, cfg.eval.classify_alpha),
                             cfg.eval.inference_batch, rng);
  const Generated g =
      generate_unconditional(m.decoder, &m.codebook, cfg.eval.samples, cfg.eval.rf_steps, cfg.train.flow, rng);
  write_labeled_samples(ctx.path("samples.csv"), g.points, g.labels);
  write_report(ctx, "report.csv",
               {{"final_loss", log.back().loss_total},
                {"test_accuracy", accuracy(pred, test.labels)},
                {"energy_distance", energy_distance(g.points, test.points)},
                {"conditional_consistency", conditional_consistency(m, cfg, rng)}});
  return kExitOk;
}

int cmd_classify(const Context& ctx, const std::string& checkpoint, const std::string& input,
                 std::optional<double> alpha) {
  const RunConfig& cfg = ctx.cfg;
  const Models m = load_models(checkpoint, cfg);
  if (!m.has_codebook()) throw DomainError("classify: checkpoint '" + checkpoint + "' is not a joint model");
  const Dataset data = input.empty() ? make_dataset(cfg.test_spec()) : read_samples(input);
  if (data.dim() != m.encoder.data_dim()) {
    throw DomainError("classify: input has " + std::to_string(data.dim()) + " columns, model expects " +
                      std::to_string(m.encoder.data_dim()));
  }
  const double a = alpha.value_or(cfg.eval.classify_alpha);
  if (!(a >= 0.0 && a <= 1.0)) throw DomainError("classify: --alpha must be in [0,1]");
  Rng rng(eval_seed(ctx.seed));
  const auto pred =
      classify(data.points, m.encoder, m.codebook, with_alpha(cfg.train.flow, a), cfg.eval.inference_batch, rng);
  write_labeled_samples(ctx.path("predictions.csv"), data.points, pred);
  std::vector<std::pair<std::string, double>> report{{"count", static_cast<double>(pred.size())}, {"alpha", a}};
  if (data.labeled() && !pred.empty()) report.emplace_back("accuracy", accuracy(pred, data.labels));
  write_report(ctx, "report.csv", report);
  return kExitOk;
}

int cmd_sample(const Context& ctx, const std::string& checkpoint, std::optional<std::size_t> count,
               std::optional<std::size_t> cls) {
  const RunConfig& cfg = ctx.cfg;
  const Models m = load_models(checkpoint, cfg);
  if (!m.has_decoder()) throw DomainError("sample: checkpoint '" + checkpoint + "' has no decoder");
  if (cls && !m.has_codebook()) throw DomainError("sample: --class needs a joint model");
  const std::size_t n = count.value_or(cfg.eval.samples);
  Rng rng(eval_seed(ctx.seed));
  const Generated g =
      cls ? generate_conditional(m.decoder, m.codebook, *cls, n, cfg.eval.rf_steps, cfg.train.flow, rng)
          : generate_unconditional(m.decoder, m.has_codebook() ? &m.codebook : nullptr, n, cfg.eval.rf_steps,
                                   cfg.train.flow, rng);
  if (m.has_codebook()) {
    write_labeled_samples(ctx.path("samples.csv"), g.points, g.labels);
  } else {
    write_samples(ctx.path("samples.csv"), g.points);
  }
  ctx.log << "wrote " << n << " samples to " << ctx.path("samples.csv") << "\n";
  return kExitOk;
}

// Anchors for the flow-only evaluations: encoder outputs of the first
// training rows when a checkpoint is given, else points on a circle.
Tensor evaluation_anchors(const Context& ctx, const std::string& checkpoint, std::size_t n, double radius) {
  if (n == 0) throw DomainError("--anchors must be positive");
  if (checkpoint.empty()) return circle_anchors(n, radius);
  const Models m = load_models(checkpoint, ctx.cfg);
  if (m.has_codebook()) return m.codebook.anchors().detach();
  if (!m.has_encoder()) throw DomainError("checkpoint '" + checkpoint + "' has no encoder");
  const Dataset train = make_dataset(ctx.cfg.data);
  std::vector<std::size_t> rows(std::min(n, train.size()));
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  NoGradScope no_grad;
  return m.encoder.encode(train.subset(rows).points).detach();
}

int cmd_eval_prior(const Context& ctx, const std::string& checkpoint, std::size_t n, double radius,
                   std::size_t draws) {
  const Tensor anchors = evaluation_anchors(ctx, checkpoint, n, radius);
  const std::size_t k = anchors.rows(), q = anchors.cols();
  std::vector<double> src;
  src.reserve(k * draws * q);
  for (std::size_t r = 0; r < draws; ++r) src.insert(src.end(), anchors.data().begin(), anchors.data().end());
  Rng rng(eval_seed(ctx.seed));
  NoGradScope no_grad;
  const Tensor latents = compute_latents(Tensor::matrix(k * draws, q, std::move(src)), AnchorSet(anchors),
                                         ctx.cfg.train.flow, rng);
  const PriorReport r = gaussian_prior_test(latents, rng);
  write_report(ctx, "prior.csv",
               {{"count", static_cast<double>(r.count)},
                {"mean_norm", r.mean_norm},
                {"cov_err", r.cov_err},
                {"energy", r.energy},
                {"energy_threshold", r.energy_threshold},
                {"passed", r.passed() ? 1.0 : 0.0}});
  return kExitOk;
}

int cmd_eval_zones(const Context& ctx, const std::string& checkpoint, std::size_t n, const std::vector<double>& guards,
                   std::size_t draws) {
  // Without a checkpoint: anchors {-1, +1}, where the rate has a closed form.
  const bool closed = checkpoint.empty();
  const Tensor anchors = closed ? Tensor::matrix(2, 1, {-1.0, 1.0}) : evaluation_anchors(ctx, checkpoint, n, 0.0);
  const AnchorSet set(anchors);
  std::vector<std::vector<double>> rows;
  for (double g : guards) {
    FlowConfig flow = ctx.cfg.train.flow;
    flow.guard = g;
    flow.validate();
    Rng rng(eval_seed(ctx.seed));
    const double rate = misassignment_rate(set, flow, draws, rng);
    std::vector<double> row{g, static_cast<double>(draws), rate};
    if (closed) {
      const double p = 0.5 * std::erfc(-((g - 1.0) / g) / std::sqrt(2.0));
      row.push_back(p);
      row.push_back(std::sqrt(p * (1.0 - p) / static_cast<double>(draws)));
    }
    ctx.log << "guard " << format_double(g) << " misassignment " << format_double(rate) << "\n";
    rows.push_back(std::move(row));
  }
  std::vector<std::string> header{"guard", "draws", "misassignment"};
  if (closed) header.insert(header.end(), {"closed_form", "std_error"});
  write_table(ctx.path("zones.csv"), header, rows);
  return kExitOk;
}

int cmd_grad_check(const Context& ctx, const std::string& loss, std::size_t batch, std::optional<double> tolerance) {
  const RunConfig& cfg = ctx.cfg;
  const bool joint = loss == "joint";
  Models m = build_models(cfg, joint ? ModelKind::Joint : ModelKind::Representation, ctx.seed);
  const Dataset train = make_dataset(cfg.data);
  std::vector<std::size_t> rows(std::min(batch, train.size()));
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const Dataset b = train.subset(rows);
  TrainConfig tc = cfg.train;
  if (!joint && !cfg.alpha_set) tc.flow.alpha = 0.45;
  if (!joint && !cfg.use_log_set) tc.use_log = true;
  Rng view_rng(eval_seed(ctx.seed));
  const Augmentor aug = cfg.augment.build();
  const Tensor view1 = aug.apply(b.points, view_rng);
  const Tensor view2 = aug.apply(b.points, view_rng);
  auto fn = [&]() -> Tensor {
    Rng frozen(eval_seed(ctx.seed) + 1);
    if (joint) return joint_loss(b.points, b.labels, m.encoder, m.decoder, m.codebook, tc, frozen).total;
    return representation_loss(view1, view2, m.encoder, tc, frozen).total;
  };
  std::vector<Tensor> params;
  for (const auto& p : m.parameters()) params.push_back(p.value);
  GradCheckOptions opts;
  opts.step = 1e-6;
  opts.floor = 1e-3;
  opts.tolerance = tolerance.value_or(cfg.eval.grad_tolerance);
  opts.max_coords_per_tensor = 16;
  const GradCheckReport r = grad_check(fn, params, opts);
  // A flat loss makes every comparison 0 = 0; report that as a failed check.
  const bool passed = r.passed && r.grad_norm > 0.0;
  ctx.log << "max_rel_err " << format_double(r.max_rel_error) << " (" << r.checked << " coordinates, tolerance "
          << format_double(opts.tolerance) << ")\n";
  if (r.grad_norm == 0.0) ctx.log << "gradient is identically zero at this batch; nothing was checked\n";
  write_report(ctx, "grad_check.csv",
               {{"loss", r.loss},
                {"grad_norm", r.grad_norm},
                {"max_rel_error", r.max_rel_error},
                {"checked", static_cast<double>(r.checked)},
                {"tolerance", opts.tolerance},
                {"passed", passed ? 1.0 : 0.0}});
  return passed ? kExitOk : kExitCheckFailed;
}

int cmd_zone_map(const Context& ctx, const std::string& checkpoint, std::size_t n, double radius) {
  const Tensor anchors = evaluation_anchors(ctx, checkpoint, n, radius);
  if (anchors.cols() != 2) throw DomainError("zone-map: needs 2D latents, got " + std::to_string(anchors.cols()));
  const std::size_t grid = ctx.cfg.eval.zone_grid;
  const double e = ctx.cfg.eval.zone_extent;
  std::vector<double> v;
  v.reserve(grid * grid * 2);
  for (std::size_t i = 0; i < grid; ++i) {
    for (std::size_t j = 0; j < grid; ++j) {
      v.push_back(-e + 2.0 * e * static_cast<double>(j) / static_cast<double>(grid - 1));
      v.push_back(-e + 2.0 * e * static_cast<double>(i) / static_cast<double>(grid - 1));
    }
  }
  const Tensor pts = Tensor::matrix(grid * grid, 2, std::move(v));
  NoGradScope no_grad;
  const auto zones = assign_zones(pts, AnchorSet(anchors), ctx.cfg.train.flow);
  std::vector<std::vector<double>> rows;
  rows.reserve(zones.size());
  for (std::size_t k = 0; k < zones.size(); ++k) rows.push_back({pts.at(k, 0), pts.at(k, 1), static_cast<double>(zones[k])});
  write_table(ctx.path("zone_map.csv"), {"x0", "x1", "zone"}, rows);
  ctx.log << "wrote " << zones.size() << " grid points to " << ctx.path("zone_map.csv") << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent zoning network toolkit: training, sampling and evaluation on 2D toy data", "lzn"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Run config file")->required();
    sub->add_option("--seed", common.seed, "Overrides train.seed");
    sub->add_option("--out", common.out, "Output directory (created if missing)");
    sub->add_option("--threads", common.threads, "Worker threads; computation is sequential")
        ->check(CLI::PositiveNumber);
    return sub;
  };
  std::string checkpoint, input, loss = "align";
  bool plain = false;
  std::optional<double> alpha, tolerance;
  std::optional<std::size_t> count, cls;
  std::size_t prior_anchors = 16, prior_draws = 10000, zone_anchors = 16, zone_draws = 100000, map_anchors = 4;
  std::size_t gc_batch = 16;
  double radius = 2.0;
  std::vector<double> guards{0.5, 0.25, 0.1};

  auto* gen = add_common(app.add_subcommand("train-gen", "Train a rectified flow, with LZN latents unless --plain"));
  gen->add_flag("--plain", plain, "Train without latents (baseline)");
  auto* repr = add_common(app.add_subcommand("train-repr", "Train an encoder by aligning augmented views"));
  auto* joint = add_common(app.add_subcommand("train-joint", "Train encoder, decoder and label codebook jointly"));
  auto* cls_cmd = add_common(app.add_subcommand("classify", "Classify points with a joint model"));
  cls_cmd->add_option("--checkpoint", checkpoint, "Joint model checkpoint")->required();
  cls_cmd->add_option("--input", input, "CSV of points (default: held-out split of the config dataset)");
  cls_cmd->add_option("--alpha", alpha, "Latent noise scale (default eval.classify_alpha)");
  auto* sample = add_common(app.add_subcommand("sample", "Draw samples from a trained decoder"));
  sample->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  sample->add_option("--count", count, "Number of samples (default eval.samples)");
  sample->add_option("--class", cls, "Condition on this class (joint models)");
  auto* prior = add_common(app.add_subcommand("eval-prior", "Test pooled latents against N(0, I)"));
  prior->add_option("--checkpoint", checkpoint, "Use encoder or codebook anchors from this checkpoint");
  prior->add_option("--anchors", prior_anchors, "Circle anchors (or training rows with --checkpoint)");
  prior->add_option("--radius", radius, "Circle radius");
  prior->add_option("--draws", prior_draws, "Latents per anchor")->check(CLI::PositiveNumber);
  auto* zones = add_common(app.add_subcommand("eval-zones", "Misassignment rate as the guard varies"));
  zones->add_option("--checkpoint", checkpoint, "Use codebook or encoder anchors from this checkpoint");
  zones->add_option("--anchors", zone_anchors, "Training rows encoded when the checkpoint has no codebook");
  zones->add_option("--guards", guards, "Guard values")->delimiter(',');
  zones->add_option("--draws", zone_draws, "Total latents per guard")->check(CLI::Range(1000, 100000000));
  auto* gc = add_common(app.add_subcommand("grad-check", "Compare tape gradients with central differences"));
  gc->add_option("--loss", loss, "align or joint")->check(CLI::IsMember({"align", "joint"}));
  gc->add_option("--batch", gc_batch, "Rows of the config dataset used")->check(CLI::PositiveNumber);
  gc->add_option("--tolerance", tolerance, "Max relative error (default eval.grad_tolerance)");
  auto* zmap = add_common(app.add_subcommand("zone-map", "Zone index over a 2D latent grid"));
  zmap->add_option("--checkpoint", checkpoint, "Use codebook or encoder anchors from this checkpoint");
  zmap->add_option("--anchors", map_anchors, "Circle anchors when no checkpoint is given");
  zmap->add_option("--radius", radius, "Circle radius");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    Context ctx = open_context(common, out);
    if (sub == gen) return cmd_train_gen(ctx, plain);
    if (sub == repr) return cmd_train_repr(ctx);
    if (sub == joint) return cmd_train_joint(ctx);
    if (sub == cls_cmd) return cmd_classify(ctx, checkpoint, input, alpha);
    if (sub == sample) return cmd_sample(ctx, checkpoint, count, cls);
    if (sub == prior) return cmd_eval_prior(ctx, checkpoint, prior_anchors, radius, prior_draws);
    if (sub == zones) return cmd_eval_zones(ctx, checkpoint, zone_anchors, guards, zone_draws);
    if (sub == gc) return cmd_grad_check(ctx, loss, gc_batch, tolerance);
    if (sub == zmap) return cmd_zone_map(ctx, checkpoint, map_anchors, radius);
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "lzn: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "lzn: i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    err << "lzn: bad file: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    err << "lzn: numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "lzn: error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace lzn
