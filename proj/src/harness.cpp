#include "dilute/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "dilute/coarse_grain.hpp"
#include "dilute/error.hpp"

namespace dilute {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t fnv1a(const void* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buffer[17];
  std::snprintf(buffer, sizeof buffer, "%016llx", static_cast<unsigned long long>(value));
  return buffer;
}

std::string format_double(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

std::string trim(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return text.substr(first, last - first + 1);
}

std::string unquote(std::string text) {
  text = trim(text);
  if (text.size() >= 2 && (text.front() == '"' || text.front() == '\'') && text.back() == text.front())
    return text.substr(1, text.size() - 2);
  return text;
}

std::vector<std::string> split_list(const std::string& raw) {
  std::string text = trim(raw);
  if (!text.empty() && text.front() == '[') {
    if (text.back() != ']') throw InvalidParameter("config: unterminated list '" + raw + "'");
    text = text.substr(1, text.size() - 2);
  }
  std::vector<std::string> items;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    item = unquote(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

double to_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size())
    throw InvalidParameter("config: " + key + " expects a number, got '" + text + "'");
  return value;
}

// Accepts plain numbers and multiples of pi such as "pi/2" or "2pi".
double to_angle(const std::string& key, const std::string& text) {
  const auto at = text.find("pi");
  if (at == std::string::npos) return to_double(key, text);
  const std::string head = trim(text.substr(0, at));
  std::string tail = trim(text.substr(at + 2));
  double value = kPi;
  if (!head.empty()) value *= to_double(key, head.back() == '*' ? trim(head.substr(0, head.size() - 1)) : head);
  if (!tail.empty()) {
    if (tail.front() != '/') throw InvalidParameter("config: malformed angle '" + text + "'");
    value /= to_double(key, trim(tail.substr(1)));
  }
  return value;
}

long long to_integer(const std::string& key, const std::string& text) {
  const double value = to_double(key, text);
  if (value != std::floor(value) || std::abs(value) > 9.0e15)
    throw InvalidParameter("config: " + key + " expects an integer, got '" + text + "'");
  return static_cast<long long>(value);
}

std::string join(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i];
  return out + "]";
}

struct CentredBox {
  std::shared_ptr<const Lattice> lattice;
  LatticeRegion region;
};

// Λ = [-L/2, L/2)^d (shifted down for odd L) inside a one-site rim.
CentredBox centred_box(int dim, int side) {
  const int lo = -side / 2;
  auto lattice = Lattice::cube(dim, lo - 1, side + 2);
  auto region = LatticeRegion::box(lattice, Point(dim, lo), std::vector<int>(dim, side));
  return {lattice, std::move(region)};
}

Environment base_environment(const ExperimentConfig& config, const LatticeRegion& region) {
  return config.p >= 1.0 ? uniform_environment(region)
                         : gen_environment(region, config.p, config.env_seed);
}

GibbsSpec spec_for(const ExperimentConfig& config, Environment env, double h) {
  const auto& lattice = env.lattice();
  auto boundary = BoundaryCondition::uniform(lattice, parse_boundary_kind(config.boundary));
  return make_spec(std::move(env), config.beta, h, std::move(boundary));
}

std::uint64_t config_key(const ExperimentConfig& config) {
  const auto text = config.to_text();
  return fnv1a(text.data(), text.size());
}

std::uint64_t noise_seed(std::uint64_t seed, std::uint64_t tag) { return hash_words({seed, tag}); }

constexpr std::uint64_t kNucleationTag = 0x6e75636c;
constexpr std::uint64_t kCatalystTag = 0x63617461;
constexpr std::uint64_t kGrowthTag = 0x67726f77;
constexpr std::uint64_t kGridTag = 0x67726964;

// Fraction of plus sites of `window` every `dt` along the run to t_end.
std::vector<std::pair<double, double>> plus_series(const GibbsSpec& spec, const Spins& start,
                                                   const LatticeRegion& window, double t_end,
                                                   double dt, const GraphicalNoise& noise) {
  auto fraction = [&](const Spins& spins) {
    std::size_t plus = 0;
    for (auto v : window.vertices()) plus += spins[v] > 0;
    return window.empty() ? 0.0 : static_cast<double>(plus) / static_cast<double>(window.size());
  };
  std::vector<std::pair<double, double>> series{{0.0, fraction(start)}};
  if (!(dt > 0.0) || !(t_end > 0.0)) return series;
  RunOptions options;
  for (double t = dt; t <= t_end; t += dt) options.snapshot_times.push_back(t);
  const auto trajectory = run(spec, start, 0.0, t_end, noise, options);
  for (const auto& [time, spins] : trajectory.snapshots) series.emplace_back(time, fraction(spins));
  return series;
}

// Stops when the tracked integral reaches the upper level or falls to the lower one.
class TwoSidedProfile final : public StopPredicate {
 public:
  TwoSidedProfile(ProfileThreshold upper, double lower) : upper_(std::move(upper)), lower_(lower) {}
  void reset(const Spins& spins) override { upper_.reset(spins); }
  void update(std::size_t site, std::int8_t before, std::int8_t after) override {
    upper_.update(site, before, after);
  }
  bool satisfied() const override { return upper_.satisfied() || upper_.integral() <= lower_; }
  std::unique_ptr<StopPredicate> clone() const override {
    return std::make_unique<TwoSidedProfile>(*this);
  }
  double integral() const noexcept { return upper_.integral(); }

 private:
  ProfileThreshold upper_;
  double lower_;
};

Interval nan_interval() { return {kNaN, kNaN}; }

std::string num(double value) { return format_double(value); }

}  // namespace

// ---------------------------------------------------------------- config

PlantSize PlantSize::parse(const std::string& raw) {
  const std::string text = trim(raw);
  PlantSize size;
  std::string number = text;
  for (auto [suffix, unit] : {std::pair{"B_root", Unit::B_root}, std::pair{"B_c", Unit::B_c}}) {
    const std::string tag = suffix;
    if (text.size() > tag.size() && text.compare(text.size() - tag.size(), tag.size(), tag) == 0) {
      number = trim(text.substr(0, text.size() - tag.size()));
      if (!number.empty() && number.back() == '*') number = trim(number.substr(0, number.size() - 1));
      size.unit = unit;
      break;
    }
  }
  size.factor = to_double("b_plant", number);
  if (!(size.factor >= 0.0)) throw InvalidParameter("b_plant must be nonnegative");
  return size;
}

std::string PlantSize::text() const {
  switch (unit) {
    case Unit::B_c: return format_double(factor) + "B_c";
    case Unit::B_root: return format_double(factor) + "B_root";
    case Unit::absolute: break;
  }
  return format_double(factor);
}

std::vector<std::uint64_t> ExperimentConfig::default_seeds(std::size_t count, std::uint64_t base) {
  std::vector<std::uint64_t> seeds(count);
  std::iota(seeds.begin(), seeds.end(), base);
  return seeds;
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& message) {
    if (!ok) throw InvalidParameter("config: " + message);
  };
  require(dim == 2 || dim == 3, "dim must be 2 or 3");
  require(lattice >= 2 && lattice <= 1024, "lattice must lie in [2, 1024]");
  require(p >= 0.0 && p <= 1.0, "p must lie in [0, 1]");
  require(beta > 0.0 && std::isfinite(beta), "beta must be positive");
  require(!h.empty(), "h list is empty");
  for (double field : h) require(field > 0.0 && std::isfinite(field), "h values must be positive");
  parse_boundary_kind(boundary);
  require((theta > 0.0 && theta <= kPi + 1e-12) || std::abs(theta - kFullAngle) < 1e-12,
          "theta must lie in (0, pi] or equal 2pi");
  require(b_min >= 0.0 && b_max >= 0.0, "b_min and b_max must be nonnegative");
  require(!seeds.empty(), "seeds list is empty");
  require(t_cap >= 0.0 && std::isfinite(t_cap), "t_cap must be finite and nonnegative");
  require(threshold > 0.0 && threshold <= 1.0, "threshold must lie in (0, 1]");
  require(window > 0.0 && window <= 1.0, "window must lie in (0, 1]");
  require(mouth > 0.0, "mouth must be positive");
  require(grow_window > 1.0, "grow_window must exceed 1");
  require(m_star_samples >= 1, "m_star_samples must be positive");
  require(m_star_box >= 1, "m_star_box must be positive");
  require(cells >= 1 && cell_side >= 0, "cells and cell_side must be positive");
  require(period >= 0.0, "period must be nonnegative");
  require(scale_N >= 0 && scale_K >= 0, "scale_N and scale_K must be nonnegative");
  require((scale_N == 0) == (scale_K == 0), "scale_N and scale_K are set together");
  require(scale_N == 0 || scale_N % scale_K == 0, "scale_K must divide scale_N");
  require(series_dt >= 0.0, "series_dt must be nonnegative");
  require(bootstrap >= 1, "bootstrap must be positive");
  if (m_star != "onsager" && m_star != "measure")
    require(to_double("m_star", m_star) > 0.0, "m_star must be positive");
  if (tension != "onsager") parse_tension(tension, dim, beta);
}

std::string ExperimentConfig::to_text() const {
  std::vector<std::string> hs, plants, seed_text;
  for (double field : h) hs.push_back(format_double(field));
  for (const auto& size : b_plant) plants.push_back(size.text());
  for (auto seed : seeds) seed_text.push_back(std::to_string(seed));
  std::ostringstream out;
  out << "dim = " << dim << "\n"
      << "lattice = " << lattice << "\n"
      << "p = " << format_double(p) << "\n"
      << "env_seed = " << env_seed << "\n"
      << "beta = " << format_double(beta) << "\n"
      << "h = " << join(hs) << "\n"
      << "boundary = " << boundary << "\n"
      << "theta = " << format_double(theta) << "\n"
      << "b_min = " << format_double(b_min) << "\n"
      << "b_max = " << format_double(b_max) << "\n"
      << "b_plant = " << join(plants) << "\n"
      << "seeds = " << join(seed_text) << "\n"
      << "t_cap = " << format_double(t_cap) << "\n"
      << "threshold = " << format_double(threshold) << "\n"
      << "window = " << format_double(window) << "\n"
      << "mouth = " << format_double(mouth) << "\n"
      << "grow_window = " << format_double(grow_window) << "\n"
      << "tension = " << tension << "\n"
      << "m_star = " << m_star << "\n"
      << "m_star_samples = " << m_star_samples << "\n"
      << "m_star_box = " << m_star_box << "\n"
      << "cells = " << cells << "\n"
      << "cell_side = " << cell_side << "\n"
      << "period = " << format_double(period) << "\n"
      << "scale_N = " << scale_N << "\n"
      << "scale_K = " << scale_K << "\n"
      << "series_dt = " << format_double(series_dt) << "\n"
      << "bootstrap = " << bootstrap << "\n";
  return out.str();
}

std::string ExperimentConfig::hash() const { return hex64(config_key(*this)); }

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig config;
  std::map<std::string, std::string> values;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;  // blank or table header
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidParameter("config line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (values.count(key)) throw InvalidParameter("config: duplicate key " + key);
    values[key] = trim(line.substr(eq + 1));
  }

  std::uint64_t seed_base = 1;
  if (auto it = values.find("seed_base"); it != values.end()) {
    seed_base = static_cast<std::uint64_t>(to_integer("seed_base", unquote(it->second)));
    values.erase(it);
  }
  for (const auto& [key, raw] : values) {
    const std::string value = unquote(raw);
    auto integer = [&] { return to_integer(key, value); };
    auto real = [&] { return to_double(key, value); };
    if (key == "dim") config.dim = static_cast<int>(integer());
    else if (key == "lattice") config.lattice = static_cast<int>(integer());
    else if (key == "p") config.p = real();
    else if (key == "env_seed") config.env_seed = static_cast<std::uint64_t>(integer());
    else if (key == "beta") config.beta = real();
    else if (key == "h") {
      config.h.clear();
      for (const auto& item : split_list(raw)) config.h.push_back(to_double(key, item));
    } else if (key == "boundary") config.boundary = value;
    else if (key == "theta") config.theta = to_angle(key, value);
    else if (key == "b_min") config.b_min = real();
    else if (key == "b_max") config.b_max = real();
    else if (key == "b_plant") {
      config.b_plant.clear();
      for (const auto& item : split_list(raw)) config.b_plant.push_back(PlantSize::parse(item));
    } else if (key == "seeds") {
      const auto items = split_list(raw);
      const bool list = !trim(raw).empty() && trim(raw).front() == '[';
      config.seeds.clear();
      if (!list && items.size() == 1) {
        const auto count = to_integer(key, items[0]);
        if (count < 1) throw InvalidParameter("config: seeds count must be positive");
        config.seeds = ExperimentConfig::default_seeds(static_cast<std::size_t>(count), seed_base);
      } else {
        for (const auto& item : items)
          config.seeds.push_back(static_cast<std::uint64_t>(to_integer(key, item)));
      }
    } else if (key == "t_cap") config.t_cap = real();
    else if (key == "threshold") config.threshold = real();
    else if (key == "window") config.window = real();
    else if (key == "mouth") config.mouth = real();
    else if (key == "grow_window") config.grow_window = real();
    else if (key == "tension") config.tension = value;
    else if (key == "m_star") config.m_star = value;
    else if (key == "m_star_samples") config.m_star_samples = static_cast<std::size_t>(std::max(0LL, integer()));
    else if (key == "m_star_box") config.m_star_box = static_cast<int>(integer());
    else if (key == "cells") config.cells = static_cast<int>(integer());
    else if (key == "cell_side") config.cell_side = static_cast<int>(integer());
    else if (key == "period") config.period = real();
    else if (key == "scale_N") config.scale_N = static_cast<int>(integer());
    else if (key == "scale_K") config.scale_K = static_cast<int>(integer());
    else if (key == "threads") config.threads = static_cast<unsigned>(std::max(0LL, integer()));
    else if (key == "series_dt") config.series_dt = real();
    else if (key == "bootstrap") config.bootstrap = static_cast<std::size_t>(std::max(0LL, integer()));
    else if (key == "out") config.out = value;
    else throw InvalidParameter("config: unknown key '" + key + "'");
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidParameter("cannot open config " + path.string());
  return parse_config(in);
}

std::shared_ptr<const SurfaceTension> resolve_tension(const ExperimentConfig& config) {
  if (config.tension == "onsager")
    return std::make_shared<IsotropicTension>(config.dim, onsager_tension(config.beta));
  return parse_tension(config.tension, config.dim, config.beta);
}

double resolve_m_star(const ExperimentConfig& config) {
  if (config.m_star == "onsager") {
    const double m = onsager_magnetization(config.beta);
    if (!(m > 0.0)) throw InvalidParameter("m_star: beta is not above the critical value");
    return m;
  }
  if (config.m_star != "measure") return to_double("m_star", config.m_star);
  auto box = centred_box(config.dim, config.m_star_box);
  const auto estimate =
      estimate_m_star(base_environment(config, box.region), config.beta, 0.0, MagnetizationSampler::cftp,
                      config.m_star_samples, hash_words({config.env_seed, 0x6d73746172}));
  if (!(estimate.m_star > 0.0)) throw InvalidParameter("m_star: measured value is not positive");
  return estimate.m_star;
}

Scales resolve_scales(const ExperimentConfig& config, double h) {
  return config.scale_N > 0 ? Scales::fixed(config.scale_N, config.scale_K, h)
                            : Scales::from_field(h, config.dim);
}

// ---------------------------------------------------------------- records

std::string to_json_line(const RunRecord& record) {
  nlohmann::json j;
  j["experiment"] = record.experiment;
  j["config_hash"] = record.config_hash;
  j["seed"] = record.seed;
  j["arm"] = record.arm;
  j["h"] = record.h;
  j["b"] = record.b;
  j["time"] = record.hit.time;
  j["censored"] = record.hit.censored;
  j["outcome"] = record.outcome;
  j["env_ref"] = record.env_ref;
  j["series"] = record.series;
  std::string occupation;
  for (auto bit : record.occupation) occupation += bit ? '1' : '0';
  j["occupation"] = occupation;
  return j.dump();
}

RunRecord parse_json_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  RunRecord record;
  record.experiment = j.at("experiment").get<std::string>();
  record.config_hash = j.at("config_hash").get<std::string>();
  record.seed = j.at("seed").get<std::uint64_t>();
  record.arm = j.at("arm").get<std::string>();
  record.h = j.at("h").get<double>();
  record.b = j.at("b").get<double>();
  record.hit.time = j.at("time").get<double>();
  record.hit.censored = j.at("censored").get<bool>();
  record.outcome = j.at("outcome").get<std::string>();
  record.env_ref = j.at("env_ref").get<std::string>();
  record.series = j.at("series").get<std::vector<std::pair<double, double>>>();
  for (char c : j.at("occupation").get<std::string>()) record.occupation.push_back(c == '1');
  return record;
}

void append_jsonl(const std::filesystem::path& path, const std::vector<RunRecord>& records) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw InvalidParameter("cannot write " + path.string());
  for (const auto& record : records) out << to_json_line(record) << '\n';
}

std::vector<RunRecord> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidParameter("cannot read " + path.string());
  std::vector<RunRecord> records;
  std::string line;
  while (std::getline(in, line))
    if (!trim(line).empty()) records.push_back(parse_json_line(line));
  return records;
}

std::string environment_hash(const Environment& env) {
  const auto bytes = snapshot_bytes(env);
  return hex64(fnv1a(bytes.data(), bytes.size()));
}

std::string store_environment(const Environment& env, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto hash = environment_hash(env);
  const auto path = dir / ("env-" + hash + ".bin");
  if (!std::filesystem::exists(path)) {
    std::ofstream out(path, std::ios::binary);
    write_snapshot(env, out);
  }
  return hash;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw InvalidParameter("cannot write " + path.string());
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(header);
  for (const auto& row : rows) line(row);
}

// ---------------------------------------------------------------- workers

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& job) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  const auto workers = static_cast<std::size_t>(std::min<std::size_t>(threads, n));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i; !failed && (i = next++) < n;) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------- statistics

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

Interval bootstrap_ci(const std::vector<double>& values,
                      const std::function<double(const std::vector<double>&)>& statistic,
                      std::size_t resamples, std::uint64_t seed, double level) {
  if (values.empty() || resamples == 0) return nan_interval();
  CounterRng rng(seed);
  std::vector<double> stats;
  stats.reserve(resamples);
  std::vector<double> sample(values.size());
  for (std::size_t r = 0; r < resamples; ++r) {
    for (auto& x : sample) x = values[static_cast<std::size_t>(rng.uniform() * values.size())];
    stats.push_back(statistic(sample));
  }
  return {quantile(stats, (1.0 - level) / 2.0), quantile(stats, (1.0 + level) / 2.0)};
}

double sign_test_p(std::size_t successes, std::size_t trials) {
  if (trials == 0 || successes == 0) return 1.0;
  if (successes > trials) return 0.0;
  const double n = static_cast<double>(trials);
  double p = 0.0;
  for (std::size_t k = successes; k <= trials; ++k) {
    const double kk = static_cast<double>(k);
    p += std::exp(std::lgamma(n + 1) - std::lgamma(kk + 1) - std::lgamma(n - kk + 1) - n * std::log(2.0));
  }
  return std::min(1.0, p);
}

double ols_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) return kNaN;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : kNaN;
}

// ---------------------------------------------------------------- nucleation

RunRecord nucleation_run(const ExperimentConfig& config, double h, std::uint64_t seed) {
  auto box = centred_box(config.dim, config.lattice);
  const auto spec = spec_for(config, base_environment(config, box.region), h);
  const int side = std::max(1, static_cast<int>(std::lround(config.window * config.lattice)));
  const auto window = LatticeRegion::box(box.lattice, Point(config.dim, -side / 2),
                                         std::vector<int>(config.dim, side))
                          .intersect(box.region);
  const auto start = make_spins(spec, -1);
  const GraphicalNoise noise(noise_seed(seed, kNucleationTag));
  PlusFraction predicate(window, config.threshold);

  RunRecord record;
  record.experiment = "nucleate";
  record.config_hash = config.hash();
  record.seed = seed;
  record.arm = "h=" + format_double(h);
  record.h = h;
  record.hit = hitting_time(spec, start, predicate, noise, config.t_cap);
  record.outcome = record.hit.censored ? "censored" : "hit";
  record.env_ref = environment_hash(*spec.env);
  if (config.series_dt > 0.0)
    record.series = plus_series(spec, start, window, record.hit.time, config.series_dt, noise);
  return record;
}

NucleationReport nucleation_scan(const ExperimentConfig& config) {
  config.validate();
  const std::size_t per_cell = config.seeds.size();
  NucleationReport report;
  report.records.resize(config.h.size() * per_cell);
  parallel_for(report.records.size(), config.threads, [&](std::size_t i) {
    report.records[i] = nucleation_run(config, config.h[i / per_cell], config.seeds[i % per_cell]);
  });

  const std::uint64_t key = config_key(config);
  auto median_of = [](const std::vector<double>& v) { return median(v); };
  std::vector<std::vector<double>> fitted_times;
  std::vector<double> x;
  for (std::size_t c = 0; c < config.h.size(); ++c) {
    NucleationCell cell;
    cell.h = config.h[c];
    std::vector<double> times;
    for (std::size_t s = 0; s < per_cell; ++s) {
      const auto& record = report.records[c * per_cell + s];
      times.push_back(record.hit.time);
      cell.censored += record.hit.censored;
    }
    cell.runs = times.size();
    cell.median = median(times);
    cell.q1 = quantile(times, 0.25);
    cell.q3 = quantile(times, 0.75);
    cell.median_censored = cell.censored > 0 && cell.median >= config.t_cap;
    cell.median_ci = bootstrap_ci(times, median_of, config.bootstrap, hash_words({key, c, 1}));
    if (!cell.median_censored && cell.median > 0.0) {
      fitted_times.push_back(times);
      x.push_back(std::pow(cell.h, -(config.dim - 1)));
    }
    report.cells.push_back(cell);
  }
  report.fitted_cells = fitted_times.size();
  report.slope = kNaN;
  report.slope_ci = nan_interval();
  if (report.fitted_cells >= 2) {
    std::vector<double> y;
    for (const auto& times : fitted_times) y.push_back(std::log(median(times)));
    report.slope = ols_slope(x, y);
    CounterRng rng(hash_words({key, 2}));
    std::vector<double> slopes;
    std::vector<double> sample;
    for (std::size_t r = 0; r < config.bootstrap; ++r) {
      for (std::size_t c = 0; c < fitted_times.size(); ++c) {
        const auto& times = fitted_times[c];
        sample.resize(times.size());
        for (auto& t : sample) t = times[static_cast<std::size_t>(rng.uniform() * times.size())];
        y[c] = std::log(std::max(median(sample), std::numeric_limits<double>::min()));
      }
      slopes.push_back(ols_slope(x, y));
    }
    report.slope_ci = {quantile(slopes, 0.025), quantile(slopes, 0.975)};
  }
  return report;
}

// ---------------------------------------------------------------- catalyst

CatalystSetup catalyst_setup(const ExperimentConfig& config) {
  config.validate();
  auto box = centred_box(config.dim, config.lattice);
  const auto tension = resolve_tension(config);
  const double m_star = resolve_m_star(config);
  const auto scales = resolve_scales(config, config.h.front());
  const double B_max = config.b_max > 0.0 ? config.b_max
                                          : catalyst_size(*tension, config.theta, config.beta, m_star);
  const WulffShape shape(tension, config.theta, B_max);
  const ConeBody cone(config.dim, config.theta);
  const Point anchor(config.dim, 0);
  auto plain = base_environment(config, box.region);
  auto carved = carve_catalyst(plain, shape, cone, anchor, scales);
  auto mouth = discretize(shape.resized(config.mouth * B_max), scales, box.lattice, anchor);
  if (!mouth.subset_of(box.region))
    throw OutOfBounds("catalyst_ab: the mouth window does not fit in the lattice");
  if (mouth.empty()) throw InvalidParameter("catalyst_ab: the mouth window is empty");
  return CatalystSetup{std::move(plain), std::move(carved.env), carved.carved_count, std::move(mouth),
                       B_max, scales};
}

RunRecord catalyst_run(const ExperimentConfig& config, const CatalystSetup& setup, bool carved,
                       std::uint64_t seed) {
  const double h = config.h.front();
  const auto spec = spec_for(config, carved ? setup.carved : setup.plain, h);
  const auto start = make_spins(spec, -1);
  const GraphicalNoise noise(noise_seed(seed, kCatalystTag));
  PlusFraction predicate(setup.mouth, config.threshold);
  RunRecord record;
  record.experiment = "catalyst";
  record.config_hash = config.hash();
  record.seed = seed;
  record.arm = carved ? "carved" : "plain";
  record.h = h;
  record.b = setup.B_max;
  record.hit = hitting_time(spec, start, predicate, noise, config.t_cap);
  record.outcome = record.hit.censored ? "censored" : "hit";
  record.env_ref = environment_hash(*spec.env);
  if (config.series_dt > 0.0)
    record.series = plus_series(spec, start, setup.mouth, record.hit.time, config.series_dt, noise);
  return record;
}

CatalystReport catalyst_ab(const ExperimentConfig& config) {
  const auto setup = catalyst_setup(config);
  CatalystReport report;
  report.B_max = setup.B_max;
  report.carved_edges = setup.carved_edges;
  report.mouth_sites = setup.mouth.size();
  report.pairs = config.seeds.size();
  report.records.resize(2 * report.pairs);
  parallel_for(report.records.size(), config.threads, [&](std::size_t i) {
    report.records[i] = catalyst_run(config, setup, i % 2 == 1, config.seeds[i / 2]);
  });

  std::vector<double> plain, carved;
  for (std::size_t k = 0; k < report.pairs; ++k) {
    const double a = report.records[2 * k].hit.time;
    const double b = report.records[2 * k + 1].hit.time;
    plain.push_back(a);
    carved.push_back(b);
    if (b < a) ++report.carved_faster;
    else if (b == a) ++report.ties;
    else ++report.carved_slower;
  }
  report.not_larger_fraction =
      static_cast<double>(report.carved_faster + report.ties) / static_cast<double>(report.pairs);
  report.sign_p = sign_test_p(report.carved_faster, report.carved_faster + report.carved_slower);

  const std::uint64_t key = config_key(config);
  auto median_of = [](const std::vector<double>& v) { return median(v); };
  report.median_plain = median(plain);
  report.median_carved = median(carved);
  report.ci_plain = bootstrap_ci(plain, median_of, config.bootstrap, hash_words({key, 3}));
  report.ci_carved = bootstrap_ci(carved, median_of, config.bootstrap, hash_words({key, 4}));
  auto ratio = [&](const std::vector<double>& pair_ids) {
    std::vector<double> a, b;
    for (double id : pair_ids) {
      a.push_back(plain[static_cast<std::size_t>(id)]);
      b.push_back(carved[static_cast<std::size_t>(id)]);
    }
    const double denominator = median(a);
    return denominator > 0.0 ? median(b) / denominator : 1.0;
  };
  std::vector<double> ids(report.pairs);
  std::iota(ids.begin(), ids.end(), 0.0);
  report.median_ratio = ratio(ids);
  report.ratio_ci = bootstrap_ci(ids, ratio, config.bootstrap, hash_words({key, 5}));

  report.effect = report.not_larger_fraction >= 0.7 && report.sign_p < 0.05;
  std::ostringstream verdict;
  verdict << (report.effect ? "catalyst effect detected" : "no catalyst effect detected") << ": carved not slower in "
          << report.carved_faster + report.ties << "/" << report.pairs << " pairs ("
          << report.carved_faster << " faster, " << report.ties << " ties, " << report.carved_slower
          << " slower), sign test p = " << report.sign_p << ", median ratio " << report.median_ratio
          << " [" << report.ratio_ci.lo << ", " << report.ratio_ci.hi << "]";
  report.verdict = verdict.str();
  report.environments = {setup.plain, setup.carved};
  return report;
}

// ---------------------------------------------------------------- planted droplets

RunRecord plant_run(const ExperimentConfig& config, double b, double m_star, std::uint64_t seed) {
  const double h = config.h.front();
  auto box = centred_box(config.dim, config.lattice);
  const auto spec = spec_for(config, base_environment(config, box.region), h);
  const auto scales = resolve_scales(config, h);
  const auto tension = resolve_tension(config);
  const Point anchor(config.dim, 0);

  const WulffShape unit(tension, kFullAngle, 1.0);
  auto planted = LatticeRegion::empty(box.lattice);
  double window_size = 0.0;
  if (b > 0.0) {
    planted = discretize(unit.resized(b), scales, box.lattice, anchor);
    window_size = config.grow_window * b;
  } else {
    window_size = critical_values(*tension, kFullAngle, config.beta, m_star).B_root;
  }
  const auto window = discretize(unit.resized(window_size), scales, box.lattice, anchor);
  if (!window.subset_of(box.region))
    throw OutOfBounds("plant_and_grow: the growth window does not fit in the lattice");

  auto start = make_spins(spec, -1);
  for (auto v : planted.vertices()) start[v] = 1;
  ProfileThreshold probe(spec, window, scales, m_star, 0.0);
  probe.reset(start);
  const double planted_volume = probe.integral();
  const double grow_level = b > 0.0 ? 2.0 * planted_volume : 0.5 * probe.volume();
  const double shrink_level = b > 0.0 ? 0.5 * planted_volume : -std::numeric_limits<double>::infinity();
  if (b > 0.0 && grow_level > probe.volume())
    throw InvalidParameter("plant_and_grow: grow_window too small to hold twice the planted volume");

  TwoSidedProfile predicate(ProfileThreshold(spec, window, scales, m_star, grow_level), shrink_level);
  const GraphicalNoise noise(noise_seed(seed, kGrowthTag));
  RunRecord record;
  record.experiment = "grow";
  record.config_hash = config.hash();
  record.seed = seed;
  record.arm = "b=" + format_double(b);
  record.h = h;
  record.b = b;
  record.hit = hitting_time(spec, start, predicate, noise, config.t_cap);
  if (record.hit.censored) record.outcome = "undecided";
  else record.outcome = predicate.integral() >= grow_level ? "grew" : "shrank";
  record.env_ref = environment_hash(*spec.env);
  if (config.series_dt > 0.0)
    record.series = plus_series(spec, start, window, record.hit.time, config.series_dt, noise);
  return record;
}

GrowthReport plant_and_grow(const ExperimentConfig& config) {
  config.validate();
  GrowthReport report;
  report.m_star = resolve_m_star(config);
  const auto tension = resolve_tension(config);
  report.energetics = critical_values(*tension, kFullAngle, config.beta, report.m_star);
  const std::size_t per_row = config.seeds.size();
  for (const auto& size : config.b_plant) {
    GrowthRow row;
    row.size = size;
    row.b = size.factor * (size.unit == PlantSize::Unit::B_c      ? report.energetics.B_c
                           : size.unit == PlantSize::Unit::B_root ? report.energetics.B_root
                                                                  : 1.0);
    report.rows.push_back(row);
  }
  report.records.resize(report.rows.size() * per_row);
  parallel_for(report.records.size(), config.threads, [&](std::size_t i) {
    report.records[i] =
        plant_run(config, report.rows[i / per_row].b, report.m_star, config.seeds[i % per_row]);
  });
  for (std::size_t r = 0; r < report.rows.size(); ++r) {
    auto& row = report.rows[r];
    row.runs = per_row;
    for (std::size_t s = 0; s < per_row; ++s) {
      const auto& outcome = report.records[r * per_row + s].outcome;
      row.grew += outcome == "grew";
      row.shrank += outcome == "shrank";
    }
    row.grow_fraction = static_cast<double>(row.grew) / static_cast<double>(row.runs);
    row.shrink_fraction = static_cast<double>(row.shrank) / static_cast<double>(row.runs);
    row.p_grow = sign_test_p(row.grew, row.grew + row.shrank);
    row.p_shrink = sign_test_p(row.shrank, row.grew + row.shrank);
  }
  return report;
}

// ---------------------------------------------------------------- growth grid

namespace {

struct GridGeometry {
  int cells = 0;
  int side = 0;
  double period = 0.0;
  std::size_t slices = 0;
  double b = 0.0;
  double m_star = 0.0;
  Scales scales;
};

GridGeometry grid_geometry(const ExperimentConfig& config) {
  if (config.cells < 3) throw InvalidParameter("conductive grid needs at least 3x3 cells");
  GridGeometry g;
  g.cells = config.cells;
  g.m_star = resolve_m_star(config);
  g.scales = resolve_scales(config, config.h.front());
  const auto tension = resolve_tension(config);
  g.b = config.b_min > 0.0
            ? config.b_min
            : 1.5 * critical_values(*tension, kFullAngle, config.beta, g.m_star).B_root;
  const WulffShape shape(tension, kFullAngle, g.b);
  g.side = config.cell_side > 0
               ? config.cell_side
               : std::max(3, static_cast<int>(std::ceil(1.5 * shape.diameter() * g.scales.N)));
  g.period = config.period > 0.0 ? config.period : config.t_cap / (2.0 * g.cells);
  g.slices = g.period > 0.0 ? static_cast<std::size_t>(std::floor(config.t_cap / g.period)) + 1 : 1;
  return g;
}

std::size_t cell_count(int cells, int dim) {
  std::size_t n = 1;
  for (int k = 0; k < dim; ++k) n *= static_cast<std::size_t>(cells);
  return n;
}

Point cell_coords(std::size_t index, int cells, int dim) {
  Point x(dim);
  for (int k = dim - 1; k >= 0; --k) {
    x[k] = static_cast<int>(index % static_cast<std::size_t>(cells));
    index /= static_cast<std::size_t>(cells);
  }
  return x;
}

}  // namespace

std::vector<std::vector<std::uint8_t>> directed_reach(const std::vector<std::uint8_t>& occupation,
                                                      int cells, int dim, std::size_t slices) {
  const std::size_t n = cell_count(cells, dim);
  if (occupation.size() != n * slices) throw InvalidParameter("directed_reach: occupation size mismatch");
  std::vector<std::vector<std::uint8_t>> reach(slices, std::vector<std::uint8_t>(n, 0));
  if (slices == 0) return reach;
  reach[0][0] = 1;
  for (std::size_t i = 1; i < slices; ++i) {
    for (std::size_t x = 0; x < n; ++x) {
      if (!occupation[i * n + x]) continue;
      const auto cx = cell_coords(x, cells, dim);
      for (std::size_t y = 0; y < n && !reach[i][x]; ++y) {
        if (!reach[i - 1][y]) continue;
        const auto cy = cell_coords(y, cells, dim);
        int distance = 0;
        for (int k = 0; k < dim; ++k) distance = std::max(distance, std::abs(cx[k] - cy[k]));
        if (distance <= 1) reach[i][x] = 1;
      }
    }
  }
  return reach;
}

RunRecord grid_run(const ExperimentConfig& config, std::uint64_t seed) {
  const auto g = grid_geometry(config);
  const int dim = config.dim;
  const int extent = g.cells * g.side;
  auto lattice = Lattice::cube(dim, -1, extent + 2);
  auto region = LatticeRegion::box(lattice, Point(dim, 0), std::vector<int>(dim, extent));
  const auto spec = spec_for(config, base_environment(config, region), config.h.front());
  const auto tension = resolve_tension(config);
  const auto first_cell = LatticeRegion::box(lattice, Point(dim, 0), std::vector<int>(dim, g.side));
  const auto planted = discretize(WulffShape(tension, kFullAngle, g.b), g.scales, lattice,
                                  Point(dim, g.side / 2));
  if (!planted.subset_of(first_cell)) throw InvalidParameter("conductive grid: droplet exceeds a cell");

  auto start = make_spins(spec, -1);
  for (auto v : planted.vertices()) start[v] = 1;
  const std::size_t n = cell_count(g.cells, dim);
  std::vector<ProfileThreshold> trackers;
  for (std::size_t x = 0; x < n; ++x) {
    Point lo = cell_coords(x, g.cells, dim);
    for (auto& c : lo) c *= g.side;
    const auto cell = LatticeRegion::box(lattice, lo, std::vector<int>(dim, g.side));
    ProfileThreshold probe(spec, cell, g.scales, g.m_star, 0.0);
    trackers.emplace_back(spec, cell, g.scales, g.m_star, config.threshold * probe.volume());
  }

  std::vector<Spins> states{start};
  const GraphicalNoise noise(noise_seed(seed, kGridTag));
  if (g.slices > 1) {
    RunOptions options;
    for (std::size_t i = 1; i < g.slices; ++i) options.snapshot_times.push_back(g.period * i);
    auto trajectory = run(spec, start, 0.0, g.period * (g.slices - 1), noise, options);
    for (auto& [time, spins] : trajectory.snapshots) states.push_back(std::move(spins));
  }

  RunRecord record;
  record.experiment = "grid";
  record.config_hash = config.hash();
  record.seed = seed;
  record.arm = "cells=" + std::to_string(g.cells);
  record.h = config.h.front();
  record.b = g.b;
  for (const auto& state : states)
    for (auto& tracker : trackers) {
      tracker.reset(state);
      record.occupation.push_back(tracker.satisfied());
    }
  const auto reach = directed_reach(record.occupation, g.cells, dim, states.size());
  record.hit = {config.t_cap, true};
  for (std::size_t i = 0; i < reach.size(); ++i)
    if (reach[i][n - 1]) {
      record.hit = {g.period * i, false};
      break;
    }
  record.outcome = record.hit.censored ? "blocked" : "spanning";
  record.env_ref = environment_hash(*spec.env);
  return record;
}

GridReport conductive_grid_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto g = grid_geometry(config);
  GridReport report;
  report.cells = g.cells;
  report.cell_side = g.side;
  report.period = g.period;
  report.slices = g.slices;
  report.b_plant = g.b;
  report.runs = config.seeds.size();
  report.records.resize(report.runs);
  parallel_for(report.runs, config.threads,
               [&](std::size_t i) { report.records[i] = grid_run(config, config.seeds[i]); });

  const std::size_t n = cell_count(g.cells, config.dim);
  report.mean_occupation.assign(g.slices, 0.0);
  std::vector<double> times, radii;
  for (const auto& record : report.records) {
    report.spanning += record.outcome == "spanning";
    const auto reach = directed_reach(record.occupation, g.cells, config.dim, g.slices);
    for (std::size_t i = 0; i < g.slices; ++i) {
      std::size_t occupied = 0;
      int radius = -1;
      for (std::size_t x = 0; x < n; ++x) {
        occupied += record.occupation[i * n + x];
        if (!reach[i][x]) continue;
        const auto c = cell_coords(x, g.cells, config.dim);
        radius = std::max(radius, *std::max_element(c.begin(), c.end()));
      }
      report.mean_occupation[i] += static_cast<double>(occupied) / static_cast<double>(n * report.runs);
      if (radius >= 0) {
        times.push_back(g.period * static_cast<double>(i));
        radii.push_back(radius);
      }
    }
  }
  report.front_speed = ols_slope(times, radii);
  return report;
}

// ---------------------------------------------------------------- persistence

void save_report(const NucleationReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  append_jsonl(dir / "runs.jsonl", report.records);
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : report.cells)
    rows.push_back({num(c.h), std::to_string(c.runs), std::to_string(c.censored), num(c.median),
                    num(c.q1), num(c.q3), num(c.median_ci.lo), num(c.median_ci.hi),
                    c.median_censored ? "1" : "0"});
  write_csv(dir / "summary.csv",
            {"h", "runs", "censored", "median", "q1", "q3", "median_ci_lo", "median_ci_hi", "median_censored"},
            rows);
  write_csv(dir / "fit.csv", {"fitted_cells", "slope", "slope_ci_lo", "slope_ci_hi"},
            {{std::to_string(report.fitted_cells), num(report.slope), num(report.slope_ci.lo),
              num(report.slope_ci.hi)}});
}

void save_report(const CatalystReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& env : report.environments) store_environment(env, dir / "environments");
  append_jsonl(dir / "runs.jsonl", report.records);
  write_csv(dir / "summary.csv",
            {"B_max", "carved_edges", "mouth_sites", "pairs", "carved_faster", "ties", "carved_slower",
             "not_larger_fraction", "sign_p", "median_plain", "plain_ci_lo", "plain_ci_hi",
             "median_carved", "carved_ci_lo", "carved_ci_hi", "median_ratio", "ratio_ci_lo",
             "ratio_ci_hi", "effect"},
            {{num(report.B_max), std::to_string(report.carved_edges), std::to_string(report.mouth_sites),
              std::to_string(report.pairs), std::to_string(report.carved_faster),
              std::to_string(report.ties), std::to_string(report.carved_slower),
              num(report.not_larger_fraction), num(report.sign_p), num(report.median_plain),
              num(report.ci_plain.lo), num(report.ci_plain.hi), num(report.median_carved),
              num(report.ci_carved.lo), num(report.ci_carved.hi), num(report.median_ratio),
              num(report.ratio_ci.lo), num(report.ratio_ci.hi), report.effect ? "1" : "0"}});
}

void save_report(const GrowthReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  append_jsonl(dir / "runs.jsonl", report.records);
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : report.rows)
    rows.push_back({r.size.text(), num(r.b), std::to_string(r.runs), std::to_string(r.grew),
                    std::to_string(r.shrank), num(r.grow_fraction), num(r.shrink_fraction),
                    num(r.p_grow), num(r.p_shrink), num(report.m_star), num(report.energetics.B_c),
                    num(report.energetics.B_root)});
  write_csv(dir / "summary.csv",
            {"b_plant", "b", "runs", "grew", "shrank", "grow_fraction", "shrink_fraction", "p_grow",
             "p_shrink", "m_star", "B_c", "B_root"},
            rows);
}

void save_report(const GridReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  append_jsonl(dir / "runs.jsonl", report.records);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < report.mean_occupation.size(); ++i)
    rows.push_back({std::to_string(i), num(report.period * static_cast<double>(i)),
                    num(report.mean_occupation[i])});
  write_csv(dir / "occupation.csv", {"slice", "time", "mean_occupation"}, rows);
  write_csv(dir / "summary.csv",
            {"cells", "cell_side", "period", "slices", "b_plant", "runs", "spanning", "front_speed"},
            {{std::to_string(report.cells), std::to_string(report.cell_side), num(report.period),
              std::to_string(report.slices), num(report.b_plant), std::to_string(report.runs),
              std::to_string(report.spanning), num(report.front_speed)}});
}

}  // namespace dilute
