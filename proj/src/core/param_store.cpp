#include "neo/core/param_store.hpp"

#include "neo/core/errors.hpp"

namespace neo {

template <std::floating_point T>
Tensor<T> ParameterStore<T>::create(const std::string& name, Shape shape, InitTag tag,
                                    Rng& rng, double init_std) {
  if (contains(name)) throw ConfigError("parameter store: duplicate name '" + name + "'");
  std::vector<T> values(shape_numel(shape));
  for (auto& v : values) {
    switch (tag) {
      case InitTag::kStandard: v = static_cast<T>(rng.normal(0.0, init_std)); break;
      case InitTag::kZero: v = T{0}; break;
      case InitTag::kOnes: v = T{1}; break;
    }
  }
  Tensor<T> tensor(std::move(shape), std::move(values), true);
  entries_.emplace(name, Entry{tensor, true, tag});
  return tensor;
}

template <std::floating_point T>
const typename ParameterStore<T>::Entry& ParameterStore<T>::at(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("parameter store: no entry '" + name + "'");
  return it->second;
}

template <std::floating_point T>
typename ParameterStore<T>::Entry& ParameterStore<T>::at(const std::string& name) {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("parameter store: no entry '" + name + "'");
  return it->second;
}

template <std::floating_point T>
std::size_t ParameterStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.tensor.numel();
  return n;
}

template <std::floating_point T>
void ParameterStore<T>::set_trainable(const std::string& name, bool trainable) {
  auto& e = at(name);
  e.trainable = trainable;
  e.tensor.set_requires_grad(trainable);
}

template <std::floating_point T>
void ParameterStore<T>::set_all_trainable(bool trainable) {
  for (auto& [name, e] : entries_) {
    e.trainable = trainable;
    e.tensor.set_requires_grad(trainable);
  }
}

template <std::floating_point T>
std::set<std::string> ParameterStore<T>::trainable_names() const {
  std::set<std::string> out;
  for (const auto& [name, e] : entries_) {
    if (e.trainable) out.insert(name);
  }
  return out;
}

template <std::floating_point T>
void ParameterStore<T>::zero_grad() {
  for (auto& [name, e] : entries_) e.tensor.zero_grad();
}

template <std::floating_point T>
Checkpoint ParameterStore<T>::to_checkpoint(
    const std::function<bool(const std::string&)>& keep) const {
  Checkpoint ckpt;
  for (const auto& [name, e] : entries_) {
    if (keep && !keep(name)) continue;
    ckpt.entries.push_back(CheckpointEntry{name, e.tensor.shape(), dtype_of<T>(), e.trainable,
                                           e.init_tag, encode_values<T>(e.tensor.values())});
  }
  return ckpt;
}

template <std::floating_point T>
void ParameterStore<T>::load(const Checkpoint& ckpt, bool apply_flags) {
  // Validate everything first so a failed load leaves the store untouched.
  for (const auto& ce : ckpt.entries) {
    const auto it = entries_.find(ce.name);
    if (it == entries_.end()) {
      throw ConfigError("load: checkpoint entry '" + ce.name + "' has no matching parameter");
    }
    if (it->second.tensor.shape() != ce.shape) {
      throw ShapeError("load: entry '" + ce.name + "' has shape " + shape_string(ce.shape) +
                       " but the model expects " + shape_string(it->second.tensor.shape()));
    }
  }
  for (const auto& ce : ckpt.entries) {
    auto& e = entries_.at(ce.name);
    const auto values = ce.values_as<T>();
    auto dst = e.tensor.mutable_values();
    std::copy(values.begin(), values.end(), dst.begin());
    if (apply_flags) {
      e.trainable = ce.trainable;
      e.tensor.set_requires_grad(ce.trainable);
    }
  }
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template class ParameterStore<long double>;

}  // namespace neo
