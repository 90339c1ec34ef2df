#include "mhf/user_index.hpp"

#include <algorithm>

namespace mhf {

UserIndex::UserIndex(std::vector<std::string> users) : users_(std::move(users)) {
  std::sort(users_.begin(), users_.end());
  users_.erase(std::unique(users_.begin(), users_.end()), users_.end());
  for (std::size_t i = 0; i < users_.size(); ++i) index_[users_[i]] = static_cast<int>(i);
}

UserIndex UserIndex::from_samples(const Dataset& dataset, std::span<const std::size_t> indices) {
  std::vector<std::string> users;
  for (auto i : indices) users.push_back(dataset[i].participant_id());
  return UserIndex(std::move(users));
}

int UserIndex::lookup(const std::string& user) const {
  auto it = index_.find(user);
  return it == index_.end() ? -1 : it->second;
}

}  // namespace mhf
