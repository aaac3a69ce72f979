#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "scope3/taxonomy.hpp"

namespace testing {

inline std::filesystem::path data_dir() { return SCOPE3_DATA_DIR; }

inline scope3::Taxonomy canonical_taxonomy(bool with_descriptions = true) {
  auto tax = scope3::load_taxonomy(data_dir() / "eeio" / "summary_classes.csv",
                                   data_dir() / "eeio" / "emission_factors.csv");
  if (with_descriptions) tax = tax.with_descriptions(scope3::load_naics_descriptions(data_dir() / "naics" / "descriptions.csv"));
  return tax;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("scope3-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
