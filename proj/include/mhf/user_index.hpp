#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "mhf/core.hpp"

namespace mhf {

// Participant -> dense index (one-hot column or embedding row), built from
// the training users.
class UserIndex {
 public:
  UserIndex() = default;
  explicit UserIndex(std::vector<std::string> users);
  static UserIndex from_samples(const Dataset& dataset, std::span<const std::size_t> indices);

  int size() const { return static_cast<int>(users_.size()); }
  int lookup(const std::string& user) const;  // -1 when unseen
  const std::vector<std::string>& users() const { return users_; }

 private:
  std::vector<std::string> users_;
  std::map<std::string, int> index_;
};

}  // namespace mhf
