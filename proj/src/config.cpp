#include "ovf/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace ovf::bench {

std::string method_name(Method m) {
  switch (m) {
    case Method::Ours: return "ours";
    case Method::Aelbo1: return "aelbo1";
    case Method::Aelbo2: return "aelbo2";
    case Method::Enkf: return "enkf";
    case Method::Bpf: return "bpf";
    case Method::Kf: return "kf";
    case Method::RmleExact: return "rmle_exact";
  }
  return "ours";
}

Method method_from_name(const std::string& name) {
  if (name == "ours") return Method::Ours;
  if (name == "aelbo1") return Method::Aelbo1;
  if (name == "aelbo2") return Method::Aelbo2;
  if (name == "enkf") return Method::Enkf;
  if (name == "bpf") return Method::Bpf;
  if (name == "kf") return Method::Kf;
  if (name == "rmle_exact") return Method::RmleExact;
  throw Error("unknown method '" + name + "'");
}

namespace {

struct Entry {
  std::string key;
  std::string doc;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (...) {
    throw Error("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

long to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    long d = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (...) {
    throw Error("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error("config key '" + key + "': expected true/false, got '" + v + "'");
}

#define NUM_ENTRY(key, field, doc)                                            \
  Entry{key, doc, [](RunConfig& c, const std::string& v) { c.field = to_double(key, v); }, \
        [](const RunConfig& c) { return fmt(c.field); }}
#define INT_ENTRY(key, field, doc)                                            \
  Entry{key, doc, [](RunConfig& c, const std::string& v) { c.field = static_cast<int>(to_int(key, v)); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }}
#define BOOL_ENTRY(key, field, doc)                                           \
  Entry{key, doc, [](RunConfig& c, const std::string& v) { c.field = to_bool(key, v); }, \
        [](const RunConfig& c) { return c.field ? std::string("true") : std::string("false"); }}
#define STR_ENTRY(key, field, doc)                                            \
  Entry{key, doc, [](RunConfig& c, const std::string& v) { c.field = v; },    \
        [](const RunConfig& c) { return c.field; }}

const std::vector<Entry>& schema() {
  static const std::vector<Entry> entries = {
      STR_ENTRY("experiment", experiment,
                "experiment tag (state_inference, parameter_learning, crnn_compare, "
                "online_vs_offline)"),
      Entry{"method", "ours | aelbo1 | aelbo2 | enkf | bpf | kf | rmle_exact",
            [](RunConfig& c, const std::string& v) { c.method = method_from_name(v); },
            [](const RunConfig& c) { return method_name(c.method); }},
      STR_ENTRY("model.kind", model_kind, "linear_gaussian | chaotic_rnn"),
      INT_ENTRY("model.dx", dx, "latent dimension"),
      INT_ENTRY("model.dy", dy, "observation dimension"),
      NUM_ENTRY("model.u_var", u_var, "diagonal transition noise variance"),
      NUM_ENTRY("model.v_var", v_var, "diagonal observation noise variance"),
      NUM_ENTRY("model.t_scale", t_scale, "chaotic_rnn Student-t noise scale"),
      NUM_ENTRY("model.t_dof", t_dof, "chaotic_rnn Student-t degrees of freedom"),
      NUM_ENTRY("model.crnn_gamma", crnn_gamma, "chaotic_rnn recurrent gain"),
      NUM_ENTRY("model.crnn_tau", crnn_tau, "chaotic_rnn time constant"),
      NUM_ENTRY("model.theta_scale", theta_scale,
                "initial theta = scale * true theta for learning runs"),
      BOOL_ENTRY("model.learn_theta", learn_theta, "learn diagonal F, G online"),
      INT_ENTRY("run.T", T, "number of observations"),
      Entry{"run.seed", "base RNG seed",
            [](RunConfig& c, const std::string& v) {
              c.seed = static_cast<std::uint64_t>(to_int("run.seed", v));
            },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      STR_ENTRY("run.data_path", data_path, "optional trajectory CSV to load"),
      STR_ENTRY("run.out_dir", out_dir, "output directory"),
      BOOL_ENTRY("run.paper_scale", paper_scale, "restore published budgets"),
      BOOL_ENTRY("run.plots", plots, "emit SVG line charts"),
      Entry{"opt.phi_optimizer", "adam | sgd inner-loop ascent rule",
            [](RunConfig& c, const std::string& v) {
              if (v == "adam") c.eng.phi_opt = engine::PhiOpt::Adam;
              else if (v == "sgd") c.eng.phi_opt = engine::PhiOpt::Sgd;
              else throw Error("config key 'opt.phi_optimizer': expected adam|sgd, got '" + v + "'");
            },
            [](const RunConfig& c) {
              return c.eng.phi_opt == engine::PhiOpt::Adam ? "adam" : "sgd";
            }},
      INT_ENTRY("opt.inner_iters", eng.inner_iters, "phi ascent steps per time index (M)"),
      NUM_ENTRY("opt.phi_lr", eng.phi_lr, "phi learning rate"),
      NUM_ENTRY("opt.phi_lr_decay", eng.phi_lr_decay, "per-iteration lr decay"),
      NUM_ENTRY("opt.phi_lr_first", eng.phi_lr_first, "phi learning rate at t=1"),
      INT_ENTRY("opt.grad_samples", eng.grad_samples, "MC samples per gradient (N)"),
      Entry{"kernel.kind", "affine | mlp backward-kernel mean",
            [](RunConfig& c, const std::string& v) {
              if (v == "affine") c.eng.kernel_kind = engine::KernelKind::Affine;
              else if (v == "mlp") c.eng.kernel_kind = engine::KernelKind::Mlp;
              else throw Error("config key 'kernel.kind': expected affine|mlp, got '" + v + "'");
            },
            [](const RunConfig& c) {
              return c.eng.kernel_kind == engine::KernelKind::Affine ? "affine" : "mlp";
            }},
      INT_ENTRY("kernel.mlp_hidden", eng.mlp_hidden, "hidden width of the kernel MLP"),
      Entry{"kernel.mlp_act", "tanh | relu hidden activation of the kernel MLP",
            [](RunConfig& c, const std::string& v) {
              if (v == "tanh") c.eng.mlp_act = nn::Act::Tanh;
              else if (v == "relu") c.eng.mlp_act = nn::Act::Relu;
              else throw Error("config key 'kernel.mlp_act': expected tanh|relu, got '" + v + "'");
            },
            [](const RunConfig& c) {
              return c.eng.mlp_act == nn::Act::Tanh ? "tanh" : "relu";
            }},
      Entry{"fit.backend", "krr | mlp recursion-fitting backend",
            [](RunConfig& c, const std::string& v) {
              if (v == "krr") c.eng.fit_backend = engine::FitBackend::Krr;
              else if (v == "mlp") c.eng.fit_backend = engine::FitBackend::MlpNet;
              else throw Error("config key 'fit.backend': expected krr|mlp, got '" + v + "'");
            },
            [](const RunConfig& c) {
              return c.eng.fit_backend == engine::FitBackend::Krr ? "krr" : "mlp";
            }},
      INT_ENTRY("fit.samples", eng.fit_samples, "regression dataset size per step"),
      INT_ENTRY("fit.val_samples", eng.val_samples, "validation points for bandwidth"),
      Entry{"fit.kernel_family", "rbf | matern52",
            [](RunConfig& c, const std::string& v) {
              if (v == "rbf") c.eng.kernel_family = reg::KernelFamily::Rbf;
              else if (v == "matern52") c.eng.kernel_family = reg::KernelFamily::Matern52;
              else throw Error("config key 'fit.kernel_family': expected rbf|matern52, got '" + v + "'");
            },
            [](const RunConfig& c) {
              return c.eng.kernel_family == reg::KernelFamily::Rbf ? "rbf" : "matern52";
            }},
      NUM_ENTRY("fit.ridge_T", eng.ridge_T, "KRR ridge for the state-derivative fit"),
      NUM_ENTRY("fit.ridge_S", eng.ridge_S, "KRR ridge for the theta-derivative fit"),
      NUM_ENTRY("fit.ridge_V", eng.ridge_V, "KRR ridge for the value fit"),
      INT_ENTRY("fit.bw_iters", eng.bw_iters, "bandwidth-selection iterations"),
      INT_ENTRY("fit.bw_minibatch", eng.bw_minibatch, "bandwidth-selection minibatch"),
      NUM_ENTRY("fit.bw_lr", eng.bw_lr, "bandwidth-selection learning rate"),
      INT_ENTRY("fit.bw_select_every", eng.bw_select_every,
                "run bandwidth selection every k-th step"),
      INT_ENTRY("fit.regnet_hidden", eng.regnet_hidden, "MLP regressor hidden width"),
      INT_ENTRY("fit.regnet_epochs", eng.regnet_epochs, "MLP regressor SGD steps"),
      INT_ENTRY("fit.regnet_batch", eng.regnet_batch, "MLP regressor minibatch"),
      NUM_ENTRY("fit.regnet_lr", eng.regnet_lr, "MLP regressor learning rate"),
      NUM_ENTRY("theta.lr", eng.theta_lr, "theta learning rate"),
      NUM_ENTRY("theta.decay_exp", eng.theta_decay_exp,
                "eta_t = theta.lr * t^-decay_exp (Robbins-Monro)"),
      INT_ENTRY("theta.samples", eng.theta_samples, "MC samples for the theta step"),
      BOOL_ENTRY("theta.uses_refit_s", eng.theta_uses_refit_S,
                 "use the freshly refit score approximator in the theta step"),
      BOOL_ENTRY("relbo.enabled", eng.compute_relbo, "track the recursive ELBO"),
      INT_ENTRY("relbo.mc_samples", eng.relbo_mc_samples, "MC samples for the RELBO mean"),
      INT_ENTRY("baseline.particles", particles, "EnKF members / BPF particles"),
      NUM_ENTRY("baseline.rmle_lr", rmle_lr, "exact-RMLE learning rate"),
      INT_ENTRY("eval.elbo_samples", eval_elbo_samples,
                "batch-ELBO samples for the final-trajectory evaluation (0 = off)"),
  };
  return entries;
}

#undef NUM_ENTRY
#undef INT_ENTRY
#undef BOOL_ENTRY
#undef STR_ENTRY

const Entry* find_entry(const std::string& key) {
  for (const Entry& e : schema())
    if (e.key == key) return &e;
  return nullptr;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void RunConfig::validate() const {
  require(dx >= 1 && dy >= 1, "config: dimensions must be positive");
  require(T >= 0, "config: run.T must be >= 0");
  require(model_kind == "linear_gaussian" || model_kind == "chaotic_rnn",
          "config: model.kind must be linear_gaussian or chaotic_rnn");
  require(u_var > 0 && v_var > 0, "config: noise variances must be positive");
  require(eng.inner_iters >= 0 && eng.grad_samples >= 1, "config: bad optimizer sizes");
  require(eng.fit_samples >= 1 && eng.val_samples >= 0, "config: bad fit sizes");
  require(particles >= 2, "config: baseline.particles must be >= 2");
  if (method == Method::Kf || method == Method::RmleExact)
    require(model_kind == "linear_gaussian",
            "config: " + method_name(method) + " requires a linear-Gaussian model");
  if (learn_theta)
    require(model_kind == "linear_gaussian", "config: theta learning requires linear_gaussian");
  if (model_kind == "chaotic_rnn")
    require(dy <= dx, "config: chaotic_rnn needs dy <= dx");
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("config line " + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    const Entry* e = find_entry(key);
    if (!e)
      throw Error("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    e->set(cfg, value);
  }
  cfg.eng.learn_theta = cfg.learn_theta;
  cfg.eng.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "load_config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string dump_config(const RunConfig& cfg) {
  std::ostringstream os;
  for (const Entry& e : schema()) os << e.key << " = " << e.get(cfg) << "\n";
  return os.str();
}

std::string config_reference() {
  RunConfig defaults;
  std::ostringstream os;
  os << "# Configuration reference (key, default, description)\n";
  for (const Entry& e : schema())
    os << e.key << " = " << e.get(defaults) << "\n    " << e.doc << "\n";
  return os.str();
}

}  // namespace ovf::bench
