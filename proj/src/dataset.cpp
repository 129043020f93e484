#include "infom/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace infom {

static_assert(std::endian::native == std::endian::little, "dataset IO assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'I', 'N', 'F', 'D'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kFlagIntentions = 1u << 0;
constexpr std::uint32_t kFlagLabeled = 1u << 1;
constexpr std::uint32_t kFlagFinetune = 1u << 2;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("dataset file truncated");
  return value;
}

void copy_rows(const std::vector<double>& src, std::size_t width, std::span<const std::size_t> idx,
               Tensor& dst) {
  dst = Tensor::matrix(idx.size(), width);
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::memcpy(&dst.at(r, 0), &src[idx[r] * width], width * sizeof(double));
}

}  // namespace

void TransitionDataset::append(std::span<const double> s, std::span<const double> a, double r,
                               std::span<const double> s_next, std::span<const double> a_next,
                               bool terminal, std::uint32_t trajectory,
                               std::optional<std::uint32_t> intention) {
  if (s.size() != state_dim || s_next.size() != state_dim || a.size() != action_dim ||
      a_next.size() != action_dim) {
    throw std::invalid_argument("TransitionDataset::append: dimension mismatch");
  }
  if (size() > 0 && intention.has_value() != has_intentions()) {
    throw std::invalid_argument("TransitionDataset::append: intention ids must be all present or all absent");
  }
  states.insert(states.end(), s.begin(), s.end());
  actions.insert(actions.end(), a.begin(), a.end());
  rewards.push_back(r);
  next_states.insert(next_states.end(), s_next.begin(), s_next.end());
  next_actions.insert(next_actions.end(), a_next.begin(), a_next.end());
  terminals.push_back(terminal ? 1 : 0);
  trajectory_ids.push_back(trajectory);
  if (intention) intention_ids.push_back(*intention);
}

void TransitionDataset::finalize() {
  const std::size_t n = size();
  if (state_dim == 0 || action_dim == 0) throw std::invalid_argument("dataset: zero dimension");
  if (states.size() != n * state_dim || next_states.size() != n * state_dim ||
      actions.size() != n * action_dim || next_actions.size() != n * action_dim ||
      rewards.size() != n || terminals.size() != n ||
      (has_intentions() && intention_ids.size() != n)) {
    throw std::invalid_argument("dataset: column lengths disagree");
  }
  ends_.assign(n, 0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && trajectory_ids[j + 1] == trajectory_ids[i]) ++j;
    for (std::size_t k = i; k <= j; ++k) ends_[k] = j;
    i = j + 1;
  }
  // A trajectory id reappearing later means records are not contiguous.
  std::vector<std::uint32_t> firsts;
  for (std::size_t k = 0; k < n; ++k)
    if (k == 0 || trajectory_ids[k] != trajectory_ids[k - 1]) firsts.push_back(trajectory_ids[k]);
  std::sort(firsts.begin(), firsts.end());
  if (std::adjacent_find(firsts.begin(), firsts.end()) != firsts.end())
    throw std::invalid_argument("dataset: trajectory records are not contiguous");
}

TransitionBatch TransitionDataset::gather(std::span<const std::size_t> indices) const {
  TransitionBatch b;
  copy_rows(states, state_dim, indices, b.states);
  copy_rows(actions, action_dim, indices, b.actions);
  copy_rows(rewards, 1, indices, b.rewards);
  copy_rows(next_states, state_dim, indices, b.next_states);
  copy_rows(next_actions, action_dim, indices, b.next_actions);
  b.labeled = labeled;
  return b;
}

TransitionBatch TransitionDataset::sample(std::size_t batch_size, Rng& rng) const {
  if (size() == 0) throw std::invalid_argument("sample: empty dataset");
  std::vector<std::size_t> idx(batch_size);
  for (auto& i : idx) i = rng.index(size());
  return gather(idx);
}

TransitionDataset TransitionDataset::without_intentions() const {
  TransitionDataset out = *this;
  out.intention_ids.clear();
  return out;
}

TransitionDataset collect_dataset(const TabularMdp& mdp, const IntentionedBehavior& behavior,
                                  std::size_t n_transitions, std::size_t horizon, Split split,
                                  std::uint64_t seed) {
  if (n_transitions == 0) throw std::invalid_argument("collect_dataset: n_transitions must be > 0");
  if (horizon < 2) throw std::invalid_argument("collect_dataset: horizon must be >= 2");
  mdp.validate();
  behavior.validate(mdp);
  Rng rng = Rng::derive(seed, Stream::Environment);

  TransitionDataset ds;
  ds.state_dim = mdp.state_dim();
  ds.action_dim = mdp.action_dim();
  ds.split = split;
  auto s_emb = [&](std::size_t s) { return mdp.state_embeddings.row(s); };
  auto a_emb = [&](std::size_t a) { return mdp.action_embeddings.row(a); };

  for (std::uint32_t traj = 0; ds.size() < n_transitions; ++traj) {
    const std::uint32_t k = static_cast<std::uint32_t>(rng.categorical(behavior.weights));
    const PolicyTable& pi = behavior.policies[k];
    std::size_t s = rng.categorical(mdp.initial);
    std::size_t a = rng.categorical(pi[s]);
    for (std::size_t t = 0; t + 1 < horizon && ds.size() < n_transitions; ++t) {
      const std::size_t s2 = mdp.sample_next(s, a, rng);
      const std::size_t a2 = rng.categorical(pi[s2]);
      const bool last = t + 2 == horizon || ds.size() + 1 == n_transitions;
      ds.append(s_emb(s), a_emb(a), 0.0, s_emb(s2), a_emb(a2), last, traj, k);
      s = s2;
      a = a2;
    }
  }
  ds.finalize();
  return ds;
}

TransitionDataset collect_dataset(const PointMassEnv& env, const PointMassController& controller,
                                  std::span<const double> intention_weights,
                                  std::size_t n_transitions, std::size_t horizon, Split split,
                                  std::uint64_t seed) {
  if (n_transitions == 0) throw std::invalid_argument("collect_dataset: n_transitions must be > 0");
  if (horizon < 2) throw std::invalid_argument("collect_dataset: horizon must be >= 2");
  const auto& goals = env.config().goals;
  if (intention_weights.size() != goals.size())
    throw std::invalid_argument("collect_dataset: one weight per point-mass goal");
  Rng rng = Rng::derive(seed, Stream::Environment);

  TransitionDataset ds;
  ds.state_dim = 2;
  ds.action_dim = 2;
  ds.split = split;
  auto act = [&](const Vec2& s, std::size_t k) {
    Vec2 a = controller.mean_action(s, goals[k]);
    for (double& v : a) v = std::clamp(v + controller.action_noise * rng.normal(), -1.0, 1.0);
    return a;
  };
  for (std::uint32_t traj = 0; ds.size() < n_transitions; ++traj) {
    const std::uint32_t k = static_cast<std::uint32_t>(rng.categorical(intention_weights));
    Vec2 s = env.reset(rng);
    Vec2 a = act(s, k);
    for (std::size_t t = 0; t + 1 < horizon && ds.size() < n_transitions; ++t) {
      const Vec2 s2 = env.step(s, a, rng);
      const Vec2 a2 = act(s2, k);
      const bool last = t + 2 == horizon || ds.size() + 1 == n_transitions;
      ds.append(s, a, 0.0, s2, a2, last, traj, k);
      s = s2;
      a = a2;
    }
  }
  ds.finalize();
  return ds;
}

std::vector<double> sample_discounted_future(const TransitionDataset& dataset, std::size_t index,
                                             double gamma, Rng& rng) {
  if (index >= dataset.size()) throw std::out_of_range("sample_discounted_future: bad index");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in [0, 1)");
  const std::size_t end = dataset.trajectory_end(index);
  // Offsets 0..max_offset are available; the last one is the final next state.
  const std::size_t max_offset = end - index + 1;
  std::size_t k = 0;
  if (gamma > 0.0) {
    const double u = rng.uniform();
    const double mass = 1.0 - std::pow(gamma, static_cast<double>(max_offset + 1));
    k = static_cast<std::size_t>(std::floor(std::log1p(-u * mass) / std::log(gamma)));
    k = std::min(k, max_offset);
  }
  auto span = k <= end - index ? dataset.state(index + k) : dataset.next_state(end);
  return {span.begin(), span.end()};
}

TransitionDataset label_rewards(const TransitionDataset& dataset, const RewardFn& reward) {
  TransitionDataset out = dataset;
  if (out.split == Split::Pretrain) {
    std::fill(out.rewards.begin(), out.rewards.end(), 0.0);
    out.labeled = false;
    return out;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out.rewards[i] = reward(out.state(i));
  out.labeled = true;
  return out;
}

std::size_t intention_mismatches(const TransitionDataset& dataset) {
  if (!dataset.has_intentions()) throw std::invalid_argument("intention audit needs hidden intention ids");
  std::size_t bad = 0;
  for (std::size_t i = 0; i + 1 < dataset.size(); ++i)
    if (dataset.trajectory_ids[i] == dataset.trajectory_ids[i + 1] &&
        dataset.intention_ids[i] != dataset.intention_ids[i + 1])
      ++bad;
  return bad;
}

std::size_t continuity_mismatches(const TransitionDataset& dataset) {
  std::size_t bad = 0;
  for (std::size_t i = 0; i + 1 < dataset.size(); ++i) {
    if (dataset.trajectory_ids[i] != dataset.trajectory_ids[i + 1]) continue;
    auto eq = [](std::span<const double> x, std::span<const double> y) {
      return std::equal(x.begin(), x.end(), y.begin());
    };
    if (!eq(dataset.next_state(i), dataset.state(i + 1)) ||
        !eq(dataset.next_action(i), dataset.action(i + 1)))
      ++bad;
  }
  return bad;
}

void write_dataset(const std::string& path, const TransitionDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.state_dim));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.action_dim));
  std::uint32_t flags = 0;
  if (ds.has_intentions()) flags |= kFlagIntentions;
  if (ds.labeled) flags |= kFlagLabeled;
  if (ds.split == Split::Finetune) flags |= kFlagFinetune;
  put<std::uint32_t>(out, flags);
  put<std::uint64_t>(out, ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out.write(reinterpret_cast<const char*>(ds.state(i).data()), ds.state_dim * sizeof(double));
    out.write(reinterpret_cast<const char*>(ds.action(i).data()), ds.action_dim * sizeof(double));
    put<double>(out, ds.rewards[i]);
    out.write(reinterpret_cast<const char*>(ds.next_state(i).data()), ds.state_dim * sizeof(double));
    out.write(reinterpret_cast<const char*>(ds.next_action(i).data()), ds.action_dim * sizeof(double));
    put<std::uint8_t>(out, ds.terminals[i]);
    put<std::uint32_t>(out, ds.trajectory_ids[i]);
    if (ds.has_intentions()) put<std::uint32_t>(out, ds.intention_ids[i]);
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

TransitionDataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error(path + ": not an INFD file");
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw std::runtime_error(path + ": unsupported version " + std::to_string(version));
  TransitionDataset ds;
  ds.state_dim = get<std::uint32_t>(in);
  ds.action_dim = get<std::uint32_t>(in);
  const auto flags = get<std::uint32_t>(in);
  ds.labeled = flags & kFlagLabeled;
  ds.split = flags & kFlagFinetune ? Split::Finetune : Split::Pretrain;
  const bool with_ids = flags & kFlagIntentions;
  const auto count = get<std::uint64_t>(in);
  std::vector<double> s(ds.state_dim), a(ds.action_dim), s2(ds.state_dim), a2(ds.action_dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    in.read(reinterpret_cast<char*>(s.data()), s.size() * sizeof(double));
    in.read(reinterpret_cast<char*>(a.data()), a.size() * sizeof(double));
    const double r = get<double>(in);
    in.read(reinterpret_cast<char*>(s2.data()), s2.size() * sizeof(double));
    in.read(reinterpret_cast<char*>(a2.data()), a2.size() * sizeof(double));
    const auto terminal = get<std::uint8_t>(in);
    const auto traj = get<std::uint32_t>(in);
    std::optional<std::uint32_t> intention;
    if (with_ids) intention = get<std::uint32_t>(in);
    ds.append(s, a, r, s2, a2, terminal != 0, traj, intention);
  }
  ds.finalize();
  return ds;
}

void write_dataset_csv(const std::string& path, const TransitionDataset& ds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  auto header = [&](const char* name, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out << name << i << ',';
  };
  header("s", ds.state_dim);
  header("a", ds.action_dim);
  out << "r,";
  header("next_s", ds.state_dim);
  header("next_a", ds.action_dim);
  out << "terminal,trajectory_id";
  if (ds.has_intentions()) out << ",intention_id";
  out << '\n' << std::setprecision(17);
  auto row = [&](std::span<const double> v) {
    for (double x : v) out << x << ',';
  };
  for (std::size_t i = 0; i < ds.size(); ++i) {
    row(ds.state(i));
    row(ds.action(i));
    out << ds.rewards[i] << ',';
    row(ds.next_state(i));
    row(ds.next_action(i));
    out << int(ds.terminals[i]) << ',' << ds.trajectory_ids[i];
    if (ds.has_intentions()) out << ',' << ds.intention_ids[i];
    out << '\n';
  }
}

}  // namespace infom
