#include "eevg/model/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace eevg {

std::string to_string(EliminationMode m) {
  switch (m) {
    case EliminationMode::dynamic:
      return "dynamic";
    case EliminationMode::fixed:
      return "static";
    case EliminationMode::none:
      return "none";
  }
  return "?";
}

EliminationMode parse_elimination_mode(const std::string& s) {
  if (s == "dynamic") {
    return EliminationMode::dynamic;
  }
  if (s == "static") {
    return EliminationMode::fixed;
  }
  if (s == "none") {
    return EliminationMode::none;
  }
  throw ConfigError("elimination must be dynamic, static or none, got '" + s + "'");
}

void EEVGConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigError(field + ": " + why); };
  if (P == 0 || H == 0 || W == 0 || H % P != 0 || W % P != 0) {
    fail("P", "patch size " + std::to_string(P) + " must divide H = " + std::to_string(H) + " and W = " +
                  std::to_string(W));
  }
  if (C == 0 || h == 0 || C % h != 0) {
    fail("h", std::to_string(h) + " heads must divide C = " + std::to_string(C));
  }
  if (C_v == 0 || C_l == 0 || D_ffn == 0 || L_max == 0) {
    fail("C_v/C_l/D_ffn/L_max", "must be positive");
  }
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    fail("alpha", "must lie in [0, 1)");
  }
  if (k < 0) {
    fail("k", "must be non-negative");
  }
  if (elimination == EliminationMode::fixed && static_m * D_layers >= N()) {
    fail("static_m", "removing " + std::to_string(static_m) + " tokens in each of " + std::to_string(D_layers) +
                         " layers leaves no token out of " + std::to_string(N()));
  }
  if (!(lr > 0.0)) {
    fail("lr", "must be positive");
  }
  if (!(weight_decay >= 0.0)) {
    fail("weight_decay", "must be nonnegative");
  }
  loss.validate();
}

EEVGConfig EEVGConfig::paper_scale() {
  EEVGConfig c;
  c.H = c.W = 224;
  c.P = 16;
  c.L_max = 20;
  c.C = c.C_v = c.C_l = 768;
  c.h = 12;
  c.D_ffn = 1024;
  return c;
}

namespace {

template <typename V>
V parse_number(const std::string& key, const std::string& text) {
  V v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(key + ": cannot parse '" + text + "'");
  }
  return v;
}

double parse_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw ConfigError(key + ": cannot parse '" + text + "'");
  }
  return v;
}

using Setter = std::function<void(EEVGConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  auto size = [](std::size_t EEVGConfig::*f) {
    return Setter([f](EEVGConfig& c, const std::string& k, const std::string& v) {
      c.*f = parse_number<std::size_t>(k, v);
    });
  };
  auto real = [](double EEVGConfig::*f) {
    return Setter([f](EEVGConfig& c, const std::string& k, const std::string& v) { c.*f = parse_double(k, v); });
  };
  auto loss = [](double LossConfig::*f) {
    return Setter([f](EEVGConfig& c, const std::string& k, const std::string& v) { c.loss.*f = parse_double(k, v); });
  };
  static const std::map<std::string, Setter> table = {
      {"H", size(&EEVGConfig::H)},
      {"W", size(&EEVGConfig::W)},
      {"P", size(&EEVGConfig::P)},
      {"L_max", size(&EEVGConfig::L_max)},
      {"C", size(&EEVGConfig::C)},
      {"C_v", size(&EEVGConfig::C_v)},
      {"C_l", size(&EEVGConfig::C_l)},
      {"h", size(&EEVGConfig::h)},
      {"D_layers", size(&EEVGConfig::D_layers)},
      {"D_ffn", size(&EEVGConfig::D_ffn)},
      {"alpha", real(&EEVGConfig::alpha)},
      {"k", [](EEVGConfig& c, const std::string& k, const std::string& v) { c.k = parse_number<int>(k, v); }},
      {"lambda_det", loss(&LossConfig::lambda_det)},
      {"lambda_seg", loss(&LossConfig::lambda_seg)},
      {"focal_gamma", loss(&LossConfig::focal_gamma)},
      {"focal_alpha", loss(&LossConfig::focal_alpha)},
      {"dice_eps", loss(&LossConfig::dice_eps)},
      {"seed",
       [](EEVGConfig& c, const std::string& k, const std::string& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
      {"elimination",
       [](EEVGConfig& c, const std::string&, const std::string& v) { c.elimination = parse_elimination_mode(v); }},
      {"static_m", size(&EEVGConfig::static_m)},
      {"lr", real(&EEVGConfig::lr)},
      {"weight_decay", real(&EEVGConfig::weight_decay)},
      {"epochs", size(&EEVGConfig::epochs)},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) {
    return "";
  }
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

EEVGConfig parse_config(const std::string& text) {
  EEVGConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line.erase(hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    try {
      it->second(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

EEVGConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config " + path.string());
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string format_config(const EEVGConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "H = " << c.H << "\nW = " << c.W << "\nP = " << c.P << "\nL_max = " << c.L_max << "\nC = " << c.C
      << "\nC_v = " << c.C_v << "\nC_l = " << c.C_l << "\nh = " << c.h << "\nD_layers = " << c.D_layers
      << "\nD_ffn = " << c.D_ffn << "\nalpha = " << c.alpha << "\nk = " << c.k
      << "\nlambda_det = " << c.loss.lambda_det << "\nlambda_seg = " << c.loss.lambda_seg
      << "\nfocal_gamma = " << c.loss.focal_gamma << "\nfocal_alpha = " << c.loss.focal_alpha
      << "\ndice_eps = " << c.loss.dice_eps << "\nseed = " << c.seed << "\nelimination = " << to_string(c.elimination)
      << "\nstatic_m = " << c.static_m << "\nlr = " << c.lr << "\nweight_decay = " << c.weight_decay
      << "\nepochs = " << c.epochs << "\n";
  return out.str();
}

}  // namespace eevg
