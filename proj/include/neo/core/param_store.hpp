#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>

#include "neo/core/checkpoint.hpp"
#include "neo/core/rng.hpp"
#include "neo/core/tensor.hpp"

namespace neo {

// Named parameters with per-name trainable flags.
//
// Entries are kept sorted by name; iteration order is therefore stable and
// independent of registration order. Tensors are shared handles, so layers
// holding a Tensor see loads and optimizer updates made through the store.
template <std::floating_point T>
class ParameterStore {
 public:
  struct Entry {
    Tensor<T> tensor;
    bool trainable = true;
    InitTag init_tag = InitTag::kStandard;
  };

  // Creates and initialises: standard -> normal(0, init_std), zero -> 0,
  // ones -> 1. Throws ConfigError on a duplicate name.
  Tensor<T> create(const std::string& name, Shape shape, InitTag tag, Rng& rng,
                   double init_std);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const Entry& at(const std::string& name) const;
  Entry& at(const std::string& name);
  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;

  void set_trainable(const std::string& name, bool trainable);
  void set_all_trainable(bool trainable);
  std::set<std::string> trainable_names() const;

  void zero_grad();

  // Entries accepted by `keep` (all when empty).
  Checkpoint to_checkpoint(const std::function<bool(const std::string&)>& keep = {}) const;

  // Copies values (converting dtype if needed) into existing tensors.
  // Shape mismatches throw ShapeError naming the entry; names absent from
  // the store throw ConfigError. With apply_flags, trainable flags follow
  // the checkpoint.
  void load(const Checkpoint& ckpt, bool apply_flags = false);

 private:
  std::map<std::string, Entry> entries_;
};

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

}  // namespace neo
