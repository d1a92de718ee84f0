#include "slagflow/loading.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "slagflow/errors.hpp"
#include "slagflow/rng.hpp"

namespace slagflow {

Tensor Batch::stacked() const {
  if (samples.empty()) return Tensor({0, 0, 0});
  const int64_t c = samples.front().channels();
  const int64_t l = samples.front().length();
  Tensor out({static_cast<int64_t>(samples.size()), c, l});
  for (size_t i = 0; i < samples.size(); ++i)
    std::copy(samples[i].tensor.data.begin(), samples[i].tensor.data.end(),
              out.data.begin() + static_cast<int64_t>(i) * c * l);
  return out;
}

namespace {

Tensor window_to_tensor(const Window& w) {
  Tensor t({1, static_cast<int64_t>(w.samples.size())});
  for (size_t i = 0; i < w.samples.size(); ++i)
    t.data[i] = static_cast<float>(w.samples[i]);
  return t;
}

void check_alignment(const WindowGroups& groups) {
  if (groups.empty()) throw UnalignedAxes("no axis groups given");
  const size_t count = groups.front().second.size();
  for (const auto& [axis, windows] : groups) {
    if (windows.size() != count) {
      std::ostringstream os;
      os << "axis '" << axis << "' has " << windows.size() << " windows, expected "
         << count;
      throw UnalignedAxes(os.str());
    }
    for (size_t i = 0; i < windows.size(); ++i) {
      if (windows[i].axis != axis)
        throw AxisMismatch("window tagged '" + windows[i].axis + "' in group '" +
                           axis + "'");
      if (windows[i].window_index != groups.front().second[i].window_index)
        throw UnalignedAxes("window indices differ across axes at position " +
                            std::to_string(i));
      if (windows[i].label != groups.front().second[i].label)
        throw LabelConflict("labels differ across axes at position " +
                            std::to_string(i));
    }
  }
}

}  // namespace

std::vector<LoadedSample> load_single_source(const std::vector<Window>& windows,
                                             const std::string& axis) {
  std::vector<LoadedSample> out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    if (w.axis != axis)
      throw AxisMismatch("window from axis '" + w.axis + "' passed as '" + axis + "'");
    LoadedSample s;
    s.tensor = window_to_tensor(w);
    s.label = w.label;
    s.prov = {w.domain_id, {w.axis}, w.window_index};
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<LoadedSample> load_parallel(const WindowGroups& groups) {
  check_alignment(groups);
  const size_t count = groups.front().second.size();
  const int64_t c = static_cast<int64_t>(groups.size());

  std::vector<std::string> axis_names;
  for (const auto& [axis, windows] : groups) axis_names.push_back(axis);

  std::vector<LoadedSample> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    const int64_t l = static_cast<int64_t>(groups.front().second[i].samples.size());
    LoadedSample s;
    s.tensor = Tensor({c, l});
    for (int64_t ch = 0; ch < c; ++ch) {
      const auto& w = groups[ch].second[i];
      if (static_cast<int64_t>(w.samples.size()) != l)
        throw UnalignedAxes("window lengths differ across axes");
      for (int64_t t = 0; t < l; ++t)
        s.tensor(ch, t) = static_cast<float>(w.samples[t]);
    }
    s.label = groups.front().second[i].label;
    s.prov = {groups.front().second[i].domain_id, axis_names,
              groups.front().second[i].window_index};
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<LoadedSample> load_selective_embedding(const WindowGroups& groups) {
  check_alignment(groups);
  const size_t per_axis = groups.front().second.size();
  const size_t c = groups.size();

  std::vector<LoadedSample> out;
  out.reserve(per_axis * c);
  for (size_t i = 0; i < per_axis * c; ++i) {
    const auto& w = groups[i % c].second[i / c];
    LoadedSample s;
    s.tensor = window_to_tensor(w);
    s.label = w.label;
    s.prov = {w.domain_id, {w.axis}, w.window_index};
    out.push_back(std::move(s));
  }
  return out;
}

int class_index(const std::vector<StageLabel>& classes, StageLabel label) {
  for (size_t i = 0; i < classes.size(); ++i)
    if (classes[i] == label) return static_cast<int>(i);
  throw LabelConflict("label " + stage_name(label) + " not in the class set");
}

std::vector<Batch> make_batches(const std::vector<LoadedSample>& samples,
                                int64_t batch_size,
                                std::optional<uint64_t> shuffle_seed,
                                std::optional<std::vector<StageLabel>> classes) {
  if (batch_size < 1) throw InvalidArg("batch_size must be >= 1");
  if (samples.empty()) return {};

  const int64_t c = samples.front().channels();
  const int64_t l = samples.front().length();
  for (const auto& s : samples)
    if (s.channels() != c || s.length() != l)
      throw ShapeMismatch("samples do not share one shape: " +
                          shape_str(s.tensor.shape) + " vs " +
                          shape_str(samples.front().tensor.shape));

  std::vector<StageLabel> class_order;
  if (classes) {
    class_order = *classes;
  } else {
    std::set<StageLabel> distinct;
    for (const auto& s : samples) distinct.insert(s.label);
    class_order.assign(distinct.begin(), distinct.end());
  }

  std::vector<size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    rng.shuffle(order);
  }

  std::vector<Batch> batches;
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
    Batch b;
    for (size_t i = start; i < end; ++i) {
      b.samples.push_back(samples[order[i]]);
      b.labels.push_back(class_index(class_order, samples[order[i]].label));
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace slagflow
