#include "fdnn/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "fdnn/binary_io.hpp"
#include "fdnn/error.hpp"

namespace fdnn {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) throw ConfigError(key + ": cannot parse '" + text + "'");
  return value;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Field {
  std::string name;  // section.key
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <typename T>
Field integer_field(std::string name, T ExperimentConfig::*member) {
  return {name, [member](const ExperimentConfig& c) { return std::to_string(c.*member); },
          [member, name](ExperimentConfig& c, const std::string& v) { c.*member = parse_number<T>(name, v); }};
}

Field real_field(std::string name, double ExperimentConfig::*member) {
  return {name, [member](const ExperimentConfig& c) { return io::format_double(c.*member); },
          [member, name](ExperimentConfig& c, const std::string& v) { c.*member = parse_number<double>(name, v); }};
}

Field text_field(std::string name, std::string ExperimentConfig::*member) {
  return {name, [member](const ExperimentConfig& c) { return c.*member; },
          [member](ExperimentConfig& c, const std::string& v) { c.*member = v; }};
}

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> table = {
      text_field("experiment.preset", &C::preset),
      integer_field("grid.m", &C::grid_m),
      real_field("parameters.lower", &C::param_lower),
      real_field("parameters.upper", &C::param_upper),
      integer_field("snapshots.count", &C::snapshot_count),
      integer_field("snapshots.threads", &C::threads),
      integer_field("pod.rank", &C::pod_rank),
      integer_field("network.layers", &C::layers),
      integer_field("network.hidden_width", &C::hidden_width),
      real_field("network.gamma", &C::gamma),
      real_field("network.horizon", &C::horizon),
      real_field("network.step", &C::step),
      real_field("network.epsilon", &C::epsilon),
      real_field("network.lambda", &C::lambda),
      integer_field("training.iterations", &C::bfgs_iterations),
      real_field("training.gradient_tolerance", &C::gradient_tolerance),
      {"training.record_iterations",
       [](const C& c) {
         std::string out;
         for (std::size_t i = 0; i < c.record_iterations.size(); ++i) {
           out += (i ? "," : "") + std::to_string(c.record_iterations[i]);
         }
         return out;
       },
       [](C& c, const std::string& v) {
         c.record_iterations.clear();
         for (const auto& item : split_list(v)) {
           c.record_iterations.push_back(parse_number<int>("training.record_iterations", item));
         }
       }},
      integer_field("mcmc.samples", &C::chain_samples),
      integer_field("mcmc.burn_in", &C::burn_in),
      real_field("mcmc.noise_std", &C::noise_std),
      {"mcmc.xi_true",
       [](const C& c) {
         std::string out;
         for (Eigen::Index i = 0; i < c.xi_true.size(); ++i) out += (i ? "," : "") + io::format_double(c.xi_true(i));
         return out;
       },
       [](C& c, const std::string& v) {
         const auto items = split_list(v);
         c.xi_true.resize(static_cast<Eigen::Index>(items.size()));
         for (std::size_t i = 0; i < items.size(); ++i) {
           c.xi_true(static_cast<Eigen::Index>(i)) = parse_number<double>("mcmc.xi_true", items[i]);
         }
       }},
      integer_field("mcmc.update_period", &C::update_period),
      real_field("mcmc.proposal_scale", &C::proposal_scale),
      real_field("mcmc.jitter", &C::jitter),
      text_field("mcmc.forward_map", &C::forward_map),
      integer_field("seeds.snapshots", &C::seed_snapshots),
      integer_field("seeds.init", &C::seed_init),
      integer_field("seeds.noise", &C::seed_noise),
      integer_field("seeds.chain", &C::seed_chain),
      {"paths.output_dir", [](const C& c) { return c.output_dir.string(); },
       [](C& c, const std::string& v) { c.output_dir = v; }},
  };
  return table;
}

const Field& find_field(const std::string& name) {
  for (const auto& f : fields()) {
    if (f.name == name) return f;
  }
  throw ConfigError("unknown configuration key '" + name + "'");
}

// Key/value pairs in file order, keys in dotted form.
std::vector<std::pair<std::string, std::string>> tokenize(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw FormatError("unterminated section header", line_no);
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("expected 'key = value'", line_no);
    if (section.empty()) throw FormatError("key outside of any [section]", line_no);
    out.emplace_back(section + "." + trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (grid_m < 2) throw ConfigError("grid.m must be >= 2");
  if (!(param_lower > 0.0 && param_lower < param_upper)) {
    throw ConfigError("parameter bounds must satisfy 0 < lower < upper");
  }
  if (snapshot_count < 1) throw ConfigError("snapshots.count must be >= 1");
  if (threads < 0) throw ConfigError("snapshots.threads must be >= 0");
  const long long n_x = static_cast<long long>(grid_m) * grid_m;
  if (pod_rank < 1 || pod_rank > std::min<long long>(snapshot_count, n_x)) {
    throw ConfigError("pod.rank must lie in [1, min(N_s, N_x)] = [1, " +
                      std::to_string(std::min<long long>(snapshot_count, n_x)) + "]");
  }
  network().validate();
  if (!(horizon > 0.0)) throw ConfigError("network.horizon must be positive");
  bfgs().validate();
  for (int it : record_iterations) {
    if (it < 1 || it > bfgs_iterations) throw ConfigError("training.record_iterations must lie in [1, iterations]");
  }
  chain().validate();
  if (!(noise_std > 0.0)) throw ConfigError("mcmc.noise_std must be positive");
  if (xi_true.size() != 2) throw ConfigError("mcmc.xi_true must have 2 entries");
  if (!prior().contains(xi_true)) throw ConfigError("mcmc.xi_true lies outside the parameter bounds");
  if (update_period < 1) throw ConfigError("mcmc.update_period must be >= 1");
  if (!(jitter >= 0.0)) throw ConfigError("mcmc.jitter must be nonnegative");
  if (forward_map != "surrogate" && forward_map != "full") {
    throw ConfigError("mcmc.forward_map must be 'surrogate' or 'full'");
  }
  if (pde::PdeParams::kLower > param_lower || pde::PdeParams::kUpper < param_upper) {
    throw ConfigError("parameter bounds exceed the admissible box [0.01, 10]^2");
  }
}

double ExperimentConfig::resolved_step() const {
  return step > 0.0 ? step : horizon / static_cast<double>(layers - 1);
}

fracnet::FracNetConfig ExperimentConfig::network() const {
  fracnet::FracNetConfig cfg;
  cfg.layers = layers;
  cfg.input_dim = 2;
  cfg.hidden_width = hidden_width;
  cfg.output_dim = pod_rank;
  cfg.gamma = gamma;
  cfg.step = layers > 1 ? resolved_step() : step;
  cfg.lambda = lambda;
  cfg.activation.epsilon = epsilon;
  return cfg;
}

optim::BfgsConfig ExperimentConfig::bfgs() const {
  optim::BfgsConfig cfg;
  cfg.max_iterations = bfgs_iterations;
  cfg.gradient_tolerance = gradient_tolerance;
  return cfg;
}

pde::GridConfig ExperimentConfig::grid() const { return {grid_m}; }

mcmc::Box ExperimentConfig::prior() const { return mcmc::Box::uniform(2, param_lower, param_upper); }

mcmc::ChainConfig ExperimentConfig::chain() const {
  mcmc::ChainConfig cfg;
  cfg.samples = chain_samples;
  cfg.burn_in = burn_in;
  cfg.seed = seed_chain;
  cfg.proposal.scale = proposal_scale;
  cfg.proposal.jitter = jitter;
  cfg.proposal.update_period = update_period;
  return cfg;
}

std::vector<std::pair<double, double>> ExperimentConfig::bounds() const {
  return {{param_lower, param_upper}, {param_lower, param_upper}};
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
  return preset == o.preset && grid_m == o.grid_m && param_lower == o.param_lower &&
         param_upper == o.param_upper && snapshot_count == o.snapshot_count && threads == o.threads &&
         pod_rank == o.pod_rank && layers == o.layers && hidden_width == o.hidden_width && gamma == o.gamma &&
         horizon == o.horizon && step == o.step && epsilon == o.epsilon && lambda == o.lambda &&
         bfgs_iterations == o.bfgs_iterations && gradient_tolerance == o.gradient_tolerance &&
         record_iterations == o.record_iterations && chain_samples == o.chain_samples && burn_in == o.burn_in &&
         noise_std == o.noise_std && xi_true.size() == o.xi_true.size() && xi_true == o.xi_true &&
         update_period == o.update_period && proposal_scale == o.proposal_scale && jitter == o.jitter &&
         forward_map == o.forward_map && seed_snapshots == o.seed_snapshots && seed_init == o.seed_init &&
         seed_noise == o.seed_noise && seed_chain == o.seed_chain && output_dir == o.output_dir;
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.preset = name;
  if (name == "reference") return c;
  if (name == "desk") {
    c.grid_m = 32;
    c.snapshot_count = 300;
    c.pod_rank = 100;
    c.chain_samples = 5000;
    c.burn_in = 2500;
    c.record_iterations = {400, 800};
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected 'reference' or 'desk')");
}

std::string serialize(const ExperimentConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.name.find('.');
    const std::string s = f.name.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out << '\n';
      out << '[' << s << "]\n";
      section = s;
    }
    out << f.name.substr(dot + 1) << " = " << f.get(config) << '\n';
  }
  return out.str();
}

ExperimentConfig parse_config(const std::string& text) {
  const auto entries = tokenize(text);
  std::string base = "reference";
  for (const auto& [key, value] : entries) {
    if (key == "experiment.preset") base = value;
  }
  ExperimentConfig config = preset(base);
  for (const auto& [key, value] : entries) find_field(key).set(config, value);
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& config) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write configuration file " + path.string());
  out << serialize(config);
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override must look like section.key=value: " + assignment);
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  if (key == "experiment.preset") {
    throw ConfigError("select the preset with --preset, not an override");
  }
  find_field(key).set(config, value);
}

}  // namespace fdnn
