#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>

#include "storyflow/error.hpp"

namespace storyflow {

/// Key-value persistence towards a learning management system. Values set
/// are staged until commit().
class LmsAdapter {
public:
  virtual ~LmsAdapter() = default;
  virtual std::optional<std::string> get(const std::string& key) = 0;
  virtual void set(const std::string& key, std::string value) = 0;
  virtual bool commit() = 0;
};

/// Stores each key as one file in a directory. Commit writes every staged
/// value to a temporary file first and then renames it over the old one.
class DirectoryLms : public LmsAdapter {
public:
  explicit DirectoryLms(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::optional<std::string> get(const std::string& key) override {
    check_key(key);
    if (auto it = staged_.find(key); it != staged_.end()) return it->second;
    std::ifstream in(dir_ / key, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  }

  void set(const std::string& key, std::string value) override {
    check_key(key);
    staged_[key] = std::move(value);
  }

  bool commit() override {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) return false;
    for (const auto& [key, value] : staged_) {
      std::ofstream out(dir_ / (key + ".tmp"), std::ios::binary | std::ios::trunc);
      out << value;
      out.close();
      if (!out) return false;
    }
    for (const auto& [key, value] : staged_) {
      std::filesystem::rename(dir_ / (key + ".tmp"), dir_ / key, ec);
      if (ec) return false;
    }
    staged_.clear();
    return true;
  }

  const std::filesystem::path& dir() const { return dir_; }

private:
  static void check_key(const std::string& key) {
    bool ok = !key.empty() && key != "." && key != "..";
    for (char c : key) {
      ok = ok && (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.');
    }
    if (!ok) throw Error("InvalidKey", "LMS key '" + key + "' is not a plain file name");
  }

  std::filesystem::path dir_;
  std::map<std::string, std::string> staged_;
};

/// In-process store shared between adapters; used by tests and the HTTP
/// service. `fail_commits` simulates an unreachable LMS.
class MemoryLms : public LmsAdapter {
public:
  using Store = std::map<std::string, std::string>;

  explicit MemoryLms(std::shared_ptr<Store> store = std::make_shared<Store>())
      : store_(std::move(store)) {}

  std::optional<std::string> get(const std::string& key) override {
    if (auto it = staged_.find(key); it != staged_.end()) return it->second;
    if (auto it = store_->find(key); it != store_->end()) return it->second;
    return std::nullopt;
  }
  void set(const std::string& key, std::string value) override { staged_[key] = std::move(value); }
  bool commit() override {
    if (fail_commits) return false;
    for (auto& [k, v] : staged_) (*store_)[k] = v;
    staged_.clear();
    return true;
  }

  const std::shared_ptr<Store>& store() const { return store_; }
  bool fail_commits = false;

private:
  std::shared_ptr<Store> store_;
  Store staged_;
};

}  // namespace storyflow
