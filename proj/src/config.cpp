#include "lzn/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "lzn/io.hpp"

namespace lzn {
namespace {

namespace pt = boost::property_tree;

template <class T>
T parse_number(const std::string& text, const std::string& key) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("key '" + key + "': cannot parse '" + text + "' as a number");
  }
  return value;
}

bool parse_bool(const std::string& text, const std::string& key) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + text + "'");
}

std::vector<std::size_t> parse_widths(const std::string& text, const std::string& key) {
  std::vector<std::size_t> out;
  std::istringstream is(text);
  std::string cell;
  while (std::getline(is, cell, ',')) {
    const auto b = cell.find_first_not_of(' ');
    const auto e = cell.find_last_not_of(' ');
    if (b == std::string::npos) throw ConfigError("key '" + key + "': empty width in '" + text + "'");
    out.push_back(parse_number<std::size_t>(cell.substr(b, e - b + 1), key));
  }
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto sz = [](auto get) {
      return Setter([get](RunConfig& c, const std::string& v, const std::string& k) {
        get(c) = parse_number<std::size_t>(v, k);
      });
    };
    auto dbl = [](auto get) {
      return Setter([get](RunConfig& c, const std::string& v, const std::string& k) {
        get(c) = parse_number<double>(v, k);
      });
    };
    auto u64 = [](auto get) {
      return Setter([get](RunConfig& c, const std::string& v, const std::string& k) {
        get(c) = parse_number<std::uint64_t>(v, k);
      });
    };
    t["data.kind"] = [](RunConfig& c, const std::string& v, const std::string& k) {
      try {
        c.data.kind = parse_dataset_kind(v);
      } catch (const DomainError& e) {
        throw ConfigError("key '" + k + "': " + e.what());
      }
    };
    t["data.count"] = sz([](RunConfig& c) -> auto& { return c.data.count; });
    t["data.components"] = sz([](RunConfig& c) -> auto& { return c.data.components; });
    t["data.spread"] = dbl([](RunConfig& c) -> auto& { return c.data.spread; });
    t["data.radius"] = dbl([](RunConfig& c) -> auto& { return c.data.radius; });
    t["data.noise"] = dbl([](RunConfig& c) -> auto& { return c.data.noise; });
    t["data.seed"] = u64([](RunConfig& c) -> auto& { return c.data.seed; });

    t["model.latent_dim"] = sz([](RunConfig& c) -> auto& { return c.model.latent_dim; });
    t["model.encoder_hidden"] = [](RunConfig& c, const std::string& v, const std::string& k) {
      c.model.encoder_hidden = parse_widths(v, k);
    };
    t["model.decoder_hidden"] = [](RunConfig& c, const std::string& v, const std::string& k) {
      c.model.decoder_hidden = parse_widths(v, k);
    };
    t["model.activation"] = [](RunConfig& c, const std::string& v, const std::string& k) {
      if (v == "tanh") {
        c.model.activation = Activation::Tanh;
      } else if (v == "relu") {
        c.model.activation = Activation::Relu;
      } else {
        throw ConfigError("key '" + k + "': expected tanh or relu, got '" + v + "'");
      }
    };

    t["train.iterations"] = sz([](RunConfig& c) -> auto& { return c.train.iterations; });
    t["train.batch"] = sz([](RunConfig& c) -> auto& { return c.train.batch; });
    t["train.lr_encoder"] = dbl([](RunConfig& c) -> auto& { return c.train.lr_encoder; });
    t["train.lr_decoder"] = dbl([](RunConfig& c) -> auto& { return c.train.lr_decoder; });
    t["train.lr_codebook"] = dbl([](RunConfig& c) -> auto& { return c.train.lr_codebook; });
    t["train.clip"] = dbl([](RunConfig& c) -> auto& { return c.train.clip; });
    t["train.rf_weight"] = dbl([](RunConfig& c) -> auto& { return c.train.rf_weight; });
    t["train.align_weight"] = dbl([](RunConfig& c) -> auto& { return c.train.align_weight; });
    t["train.beta1"] = dbl([](RunConfig& c) -> auto& { return c.train.adam.beta1; });
    t["train.beta2"] = dbl([](RunConfig& c) -> auto& { return c.train.adam.beta2; });
    t["train.adam_eps"] = dbl([](RunConfig& c) -> auto& { return c.train.adam.eps; });
    t["train.seed"] = u64([](RunConfig& c) -> auto& { return c.train.seed; });
    t["train.use_log"] = [](RunConfig& c, const std::string& v, const std::string& k) {
      c.train.use_log = parse_bool(v, k);
      c.use_log_set = true;
    };
    t["train.wall_clock"] = [](RunConfig& c, const std::string& v, const std::string& k) {
      c.train.wall_clock = parse_bool(v, k);
    };

    t["flow.guard"] = dbl([](RunConfig& c) -> auto& { return c.train.flow.guard; });
    t["flow.alpha"] = [](RunConfig& c, const std::string& v, const std::string& k) {
      c.train.flow.alpha = parse_number<double>(v, k);
      c.alpha_set = true;
    };
    t["flow.steps"] = sz([](RunConfig& c) -> auto& { return c.train.flow.steps; });
    t["flow.cutoff"] = sz([](RunConfig& c) -> auto& { return c.train.flow.cutoff; });
    t["flow.solver"] = [](RunConfig& c, const std::string& v, const std::string& k) {
      if (v == "euler") {
        c.train.flow.solver = Solver::Euler;
      } else if (v == "midpoint") {
        c.train.flow.solver = Solver::Midpoint;
      } else {
        throw ConfigError("key '" + k + "': expected euler or midpoint, got '" + v + "'");
      }
    };
    t["flow.checkpoint"] = [](RunConfig& c, const std::string& v, const std::string& k) {
      if (v == "full_tape") {
        c.train.flow.checkpoint = CheckpointMode::FullTape;
      } else if (v == "recompute_velocity") {
        c.train.flow.checkpoint = CheckpointMode::RecomputeVelocity;
      } else {
        throw ConfigError("key '" + k + "': expected full_tape or recompute_velocity, got '" + v + "'");
      }
    };

    t["augment.jitter"] = dbl([](RunConfig& c) -> auto& { return c.augment.jitter; });
    t["augment.rotation"] = dbl([](RunConfig& c) -> auto& { return c.augment.rotation; });

    t["eval.rf_steps"] = sz([](RunConfig& c) -> auto& { return c.eval.rf_steps; });
    t["eval.recon_steps"] = sz([](RunConfig& c) -> auto& { return c.eval.recon_steps; });
    t["eval.samples"] = sz([](RunConfig& c) -> auto& { return c.eval.samples; });
    t["eval.classify_alpha"] = dbl([](RunConfig& c) -> auto& { return c.eval.classify_alpha; });
    t["eval.inference_batch"] = sz([](RunConfig& c) -> auto& { return c.eval.inference_batch; });
    t["eval.test_count"] = sz([](RunConfig& c) -> auto& { return c.eval.test_count; });
    t["eval.zone_grid"] = sz([](RunConfig& c) -> auto& { return c.eval.zone_grid; });
    t["eval.zone_extent"] = dbl([](RunConfig& c) -> auto& { return c.eval.zone_extent; });
    t["eval.grad_tolerance"] = dbl([](RunConfig& c) -> auto& { return c.eval.grad_tolerance; });
    return t;
  }();
  return table;
}

}  // namespace

Augmentor AugmentConfig::build() const {
  std::vector<Augmentor> parts;
  if (rotation > 0.0) parts.push_back(Augmentor::rotation(rotation));
  if (jitter > 0.0) parts.push_back(Augmentor::jitter(jitter));
  if (parts.empty()) return Augmentor::identity();
  if (parts.size() == 1) return parts[0];
  return Augmentor::compose(std::move(parts));
}

void RunConfig::validate() const {
  try {
    data.validate();
    train.validate();
    if (model.latent_dim == 0) throw DomainError("model: latent_dim must be positive");
    for (auto w : model.encoder_hidden) {
      if (w == 0) throw DomainError("model: zero encoder width");
    }
    for (auto w : model.decoder_hidden) {
      if (w == 0) throw DomainError("model: zero decoder width");
    }
    if (!(augment.jitter >= 0.0 && augment.rotation >= 0.0)) throw DomainError("augment: values must be >= 0");
    if (eval.rf_steps == 0 || eval.recon_steps == 0 || eval.inference_batch == 0 || eval.zone_grid < 2) {
      throw DomainError("eval: rf_steps, recon_steps and inference_batch must be positive, zone_grid >= 2");
    }
    if (!(eval.classify_alpha >= 0.0 && eval.classify_alpha <= 1.0)) throw DomainError("eval: classify_alpha in [0,1]");
    if (!(eval.zone_extent > 0.0) || !(eval.grad_tolerance > 0.0)) {
      throw DomainError("eval: zone_extent and grad_tolerance must be positive");
    }
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
}

DatasetSpec RunConfig::test_spec() const {
  DatasetSpec spec = data;
  spec.count = eval.test_count;
  spec.seed = data.seed + 1;
  return spec;
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig cfg;
  const auto& table = setters();
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(origin + ": key '" + section + "' is outside any section");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      const auto it = table.find(full);
      if (it == table.end()) throw ConfigError(origin + ": unknown key '" + full + "'");
      try {
        it->second(cfg, value.get_value<std::string>(), full);
      } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
      }
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_run_config(buf.str(), path);
}

std::string to_text(const RunConfig& c) {
  const auto f = [](double x) { return format_double(x); };
  std::ostringstream os;
  os << "[data]\n"
     << "kind = " << to_string(c.data.kind) << "\ncount = " << c.data.count << "\ncomponents = " << c.data.components
     << "\nspread = " << f(c.data.spread) << "\nradius = " << f(c.data.radius) << "\nnoise = " << f(c.data.noise)
     << "\nseed = " << c.data.seed << "\n\n";
  os << "[model]\n"
     << "latent_dim = " << c.model.latent_dim << "\nencoder_hidden = " << join(c.model.encoder_hidden)
     << "\ndecoder_hidden = " << join(c.model.decoder_hidden)
     << "\nactivation = " << (c.model.activation == Activation::Tanh ? "tanh" : "relu") << "\n\n";
  const auto& t = c.train;
  os << "[train]\n"
     << "iterations = " << t.iterations << "\nbatch = " << t.batch << "\nlr_encoder = " << f(t.lr_encoder)
     << "\nlr_decoder = " << f(t.lr_decoder) << "\nlr_codebook = " << f(t.lr_codebook) << "\nclip = " << f(t.clip)
     << "\nrf_weight = " << f(t.rf_weight) << "\nalign_weight = " << f(t.align_weight)
     << "\nbeta1 = " << f(t.adam.beta1) << "\nbeta2 = " << f(t.adam.beta2) << "\nadam_eps = " << f(t.adam.eps)
     << "\nseed = " << t.seed;
  if (c.use_log_set) os << "\nuse_log = " << (t.use_log ? "true" : "false");
  os << "\nwall_clock = " << (t.wall_clock ? "true" : "false") << "\n\n";
  os << "[flow]\n"
     << "guard = " << f(t.flow.guard);
  if (c.alpha_set) os << "\nalpha = " << f(t.flow.alpha);
  os << "\nsteps = " << t.flow.steps << "\ncutoff = " << t.flow.cutoff
     << "\nsolver = " << (t.flow.solver == Solver::Euler ? "euler" : "midpoint")
     << "\ncheckpoint = " << (t.flow.checkpoint == CheckpointMode::FullTape ? "full_tape" : "recompute_velocity")
     << "\n\n";
  os << "[augment]\n"
     << "jitter = " << f(c.augment.jitter) << "\nrotation = " << f(c.augment.rotation) << "\n\n";
  os << "[eval]\n"
     << "rf_steps = " << c.eval.rf_steps << "\nrecon_steps = " << c.eval.recon_steps << "\nsamples = " << c.eval.samples
     << "\nclassify_alpha = " << f(c.eval.classify_alpha) << "\ninference_batch = " << c.eval.inference_batch
     << "\ntest_count = " << c.eval.test_count << "\nzone_grid = " << c.eval.zone_grid
     << "\nzone_extent = " << f(c.eval.zone_extent) << "\ngrad_tolerance = " << f(c.eval.grad_tolerance) << "\n";
  return os.str();
}

}  // namespace lzn
