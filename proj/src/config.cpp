#include "config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dac {

namespace {

std::map<std::string, RunConfig::KeySpec> make_registry() {
  using T = RunConfig::Type;
  std::map<std::string, RunConfig::KeySpec> reg;
  auto add = [&](const std::string& key, T type, const std::string& dflt,
                 const std::string& help) {
    reg[key] = {type, dflt, help};
  };
  add("seed", T::u64_t, "1", "master seed for the run");
  add("out_dir", T::string_t, "runs/out", "output directory");
  add("run_dir", T::string_t, "", "existing run directory (eval, export)");
  add("checkpoint", T::string_t, "", "checkpoint file override (eval)");

  // tabular lab
  add("mdp", T::string_t, "five_state", "five_state or a path to an mdp file");
  add("losses", T::string_t, "all",
      "comma list: huber_quantile,huber_quantile_imputed,energy_samples,"
      "energy_gmm (or all)");
  add("fit_steps", T::int_t, "4000", "episodes per tabular fit");
  add("fit_lr", T::double_t, "0.05", "tabular fit learning rate");
  add("fit_atoms", T::int_t, "15", "Dirac atoms for quantile/sample fits");
  add("fit_mixtures", T::int_t, "5", "mixture components for the GMM fit");
  add("fit_gamma", T::double_t, "1.0", "discount for the tabular lab");
  add("fit_lambda", T::double_t, "0.95", "lambda for SR targets in the lab");
  add("contraction_trials", T::int_t, "100", "contraction check trials");
  add("contraction_states", T::int_t, "6", "states of the random MDP");

  // training
  add("env", T::string_t, "gridworld",
      "five_state | gridworld | gridworld_tworoom | lqr1d");
  add("variant", T::string_t, "gmac", "ppo_scalar | iqac | iqac_e | gmac");
  add("iterations", T::int_t, "500", "training iterations");
  add("gamma", T::double_t, "0.99", "discount factor");
  add("lambda", T::double_t, "0.95", "SR(lambda)/GAE mixing");
  add("clip_epsilon", T::double_t, "0.2", "PPO clip range");
  add("epochs", T::int_t, "4", "passes over each rollout");
  add("minibatch_size", T::int_t, "128", "SGD minibatch size");
  add("rollout_steps", T::int_t, "64", "steps per environment per iteration");
  add("env_count", T::int_t, "8", "parallel environments");
  add("learning_rate", T::double_t, "2.5e-4", "Adam learning rate");
  add("entropy_coef", T::double_t, "0.01", "entropy bonus coefficient");
  add("value_loss_coef", T::double_t, "0.5", "critic loss coefficient");
  add("mixtures", T::int_t, "5", "mixture components K (gmac)");
  add("atoms", T::int_t, "64", "critic atoms m (iqac, iqac_e)");
  add("sr_particles", T::int_t, "16", "SR particle count (gmac targets)");
  add("advantage_norm", T::bool_t, "true", "normalize advantages per batch");
  add("intrinsic_coef", T::double_t, "0",
      "coefficient on the distributional intrinsic reward");
  add("hidden", T::int_list_t, "64,64", "hidden layer sizes");
  add("grid_size", T::int_t, "5", "gridworld board size");
  add("slip", T::double_t, "0", "gridworld slip probability");
  add("noise_sigma", T::double_t, "0.05", "lqr1d process noise");
  add("checkpoint_every", T::int_t, "100", "iterations between checkpoints");
  add("eval_episodes", T::int_t, "100", "episodes per evaluation");
  add("eval_seed", T::u64_t, "9000", "seed for evaluation rollouts");

  // flops
  add("variants", T::string_t, "all", "variants for the flops table");
  return reg;
}

void check_parse(bool ok, const std::string& key, const std::string& value) {
  if (!ok)
    throw std::invalid_argument("config: bad value for '" + key + "': " +
                                value);
}

}  // namespace

const std::map<std::string, RunConfig::KeySpec>& RunConfig::registry() {
  static const std::map<std::string, KeySpec> reg = make_registry();
  return reg;
}

RunConfig::RunConfig() {
  for (const auto& [key, spec] : registry()) values_[key] = spec.default_value;
}

const RunConfig::KeySpec& RunConfig::spec_of(const std::string& key) const {
  auto it = registry().find(key);
  if (it == registry().end())
    throw std::invalid_argument("config: unknown key '" + key + "'");
  return it->second;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const KeySpec& spec = spec_of(key);
  // parse once to validate the type
  try {
    std::size_t used = 0;
    switch (spec.type) {
      case Type::string_t: break;
      case Type::int_t:
        (void)std::stoi(value, &used);
        check_parse(used == value.size(), key, value);
        break;
      case Type::double_t:
        (void)std::stod(value, &used);
        check_parse(used == value.size(), key, value);
        break;
      case Type::u64_t:
        (void)std::stoull(value, &used);
        check_parse(used == value.size(), key, value);
        break;
      case Type::bool_t:
        check_parse(value == "true" || value == "false" || value == "0" ||
                        value == "1",
                    key, value);
        break;
      case Type::int_list_t: {
        std::istringstream ss(value);
        std::string item;
        bool any = false;
        while (std::getline(ss, item, ',')) {
          (void)std::stoi(item, &used);
          check_parse(used == item.size(), key, value);
          any = true;
        }
        check_parse(any, key, value);
        break;
      }
    }
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception&) {
    check_parse(false, key, value);
  }
  values_[key] = value;
}

bool RunConfig::has(const std::string& key) const {
  return values_.count(key) != 0;
}

void RunConfig::load_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                  " is not key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      auto b = s.find_first_not_of(" \t");
      auto e = s.find_last_not_of(" \t");
      s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
    };
    trim(key);
    trim(value);
    set(key, value);
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  load_text(ss.str());
}

void RunConfig::apply_env_overrides() {
  for (const auto& [key, spec] : registry()) {
    std::string env_key = "DAC_";
    for (char c : key)
      env_key += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (const char* value = std::getenv(env_key.c_str())) set(key, value);
  }
}

std::string RunConfig::get_string(const std::string& key) const {
  spec_of(key);
  return values_.at(key);
}

int RunConfig::get_int(const std::string& key) const {
  return std::stoi(get_string(key));
}

double RunConfig::get_double(const std::string& key) const {
  return std::stod(get_string(key));
}

bool RunConfig::get_bool(const std::string& key) const {
  std::string v = get_string(key);
  return v == "true" || v == "1";
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  return std::stoull(get_string(key));
}

std::vector<int> RunConfig::get_int_list(const std::string& key) const {
  std::istringstream ss(get_string(key));
  std::string item;
  std::vector<int> out;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

void RunConfig::require_nonempty(const std::string& key) const {
  if (get_string(key).empty())
    throw std::invalid_argument("config: '" + key + "' is required");
}

std::string RunConfig::snapshot() const {
  std::ostringstream out;
  for (const auto& [key, value] : values_) out << key << "=" << value << "\n";
  return out.str();
}

}  // namespace dac
