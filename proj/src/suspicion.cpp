#include "dissent/suspicion.hpp"

#include <algorithm>

namespace dissent {

const char* to_string(SuspicionStatus s) {
  switch (s) {
    case SuspicionStatus::clear: return "clear";
    case SuspicionStatus::suspected: return "suspected";
    case SuspicionStatus::resolved: return "resolved";
    case SuspicionStatus::failed: return "failed";
  }
  return "unknown";
}

void SuspicionState::suspect(MemberId suspector, MemberId suspect, std::uint64_t now_us) {
  auto& e = entries_[{suspector, suspect}];
  if (e.status == SuspicionStatus::suspected || e.status == SuspicionStatus::failed) return;
  e.status = SuspicionStatus::suspected;
  e.since_us = now_us;
}

void SuspicionState::resolve(MemberId suspect) {
  for (auto& [k, e] : entries_)
    if (k.second == suspect && e.status == SuspicionStatus::suspected) e.status = SuspicionStatus::resolved;
}

void SuspicionState::resolve(MemberId suspector, MemberId suspect) {
  auto it = entries_.find({suspector, suspect});
  if (it != entries_.end() && it->second.status == SuspicionStatus::suspected)
    it->second.status = SuspicionStatus::resolved;
}

void SuspicionState::fail(MemberId suspect) {
  bool any = false;
  for (auto& [k, e] : entries_) {
    if (k.second != suspect) continue;
    e.status = SuspicionStatus::failed;
    any = true;
  }
  if (!any) entries_[{suspect, suspect}].status = SuspicionStatus::failed;
}

SuspicionStatus SuspicionState::status(MemberId suspector, MemberId suspect) const {
  auto it = entries_.find({suspector, suspect});
  return it == entries_.end() ? SuspicionStatus::clear : it->second.status;
}

bool SuspicionState::expired(MemberId suspector, MemberId suspect, std::uint64_t now_us) const {
  auto it = entries_.find({suspector, suspect});
  return it != entries_.end() && it->second.status == SuspicionStatus::suspected &&
         now_us - it->second.since_us >= timeout_us_;
}

std::vector<MemberId> SuspicionState::failed() const {
  std::vector<MemberId> out;
  for (const auto& [k, e] : entries_)
    if (e.status == SuspicionStatus::failed && std::find(out.begin(), out.end(), k.second) == out.end())
      out.push_back(k.second);
  return out;
}

}  // namespace dissent
