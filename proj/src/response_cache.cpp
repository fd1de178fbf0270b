#include <fstream>
#include <iostream>

#include "ctxsent/backend.hpp"
#include "ctxsent/error.hpp"

namespace ctxsent {

namespace fs = std::filesystem;

namespace {

Json value_to_json(const CacheValue& value) {
  if (const auto* text = std::get_if<std::string>(&value)) return *text;
  const auto& scores = std::get<ChoiceScores>(value);
  return Json{{"loglik", scores.loglik}, {"normalization", to_string(scores.normalization)}};
}

CacheValue value_from_json(const std::string& kind, const Json& j) {
  if (kind == "text") return j.get<std::string>();
  if (kind == "scores") {
    ChoiceScores scores;
    const auto& ll = j.at("loglik");
    if (!ll.is_array() || ll.size() != kNumPolarities) throw std::runtime_error("loglik must have 3 entries");
    for (std::size_t i = 0; i < kNumPolarities; ++i) scores.loglik[i] = ll.at(i).get<double>();
    scores.normalization = parse_normalization(j.at("normalization").get<std::string>());
    return scores;
  }
  throw std::runtime_error("unknown cache kind '" + kind + "'");
}

}  // namespace

ResponseCache::ResponseCache(fs::path path, Clock clock)
    : path_(std::move(path)), clock_(clock ? std::move(clock) : Clock(utc_now_iso8601)) {
  if (path_.empty() || !fs::exists(path_)) return;
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw IoError("cannot read cache file: " + path_.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = Json::parse(line);
      Entry entry{value_from_json(j.at("kind").get<std::string>(), j.at("value")),
                  j.value("model_id", std::string()), j.value("created_at", std::string())};
      entries_.insert_or_assign(j.at("key").get<std::string>(), std::move(entry));
    } catch (const std::exception& e) {
      ++skipped_;
      std::cerr << "warning: skipping corrupt cache line " << number << " in " << path_.string() << ": "
                << e.what() << '\n';
    }
  }
}

std::optional<CacheValue> ResponseCache::get(const std::string& key) const {
  std::lock_guard lock(mutex_);
  if (auto it = entries_.find(key); it != entries_.end()) return it->second.value;
  return std::nullopt;
}

Json ResponseCache::line_for(const std::string& key, const Entry& entry) const {
  return Json{{"key", key},
              {"kind", std::holds_alternative<std::string>(entry.value) ? "text" : "scores"},
              {"value", value_to_json(entry.value)},
              {"model_id", entry.model_id},
              {"created_at", entry.created_at}};
}

void ResponseCache::put(const std::string& key, const CacheValue& value, const std::string& model_id) {
  std::lock_guard lock(mutex_);
  Entry entry{value, model_id, clock_()};
  if (!path_.empty()) {
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot append to cache file: " + path_.string());
    out << line_for(key, entry).dump() << '\n';
  }
  entries_.insert_or_assign(key, std::move(entry));
}

void ResponseCache::compact() {
  std::lock_guard lock(mutex_);
  if (path_.empty()) return;
  const fs::path tmp = path_.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write cache file: " + tmp.string());
    for (const auto& [key, entry] : entries_) out << line_for(key, entry).dump() << '\n';
  }
  fs::rename(tmp, path_);
}

std::size_t ResponseCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

}  // namespace ctxsent
