#ifndef PITCHNET_TESTS_SUPPORT_HPP
#define PITCHNET_TESTS_SUPPORT_HPP

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "pitchnet/error.hpp"

namespace testing_support {

inline std::filesystem::path fixtures() { return PITCHNET_FIXTURES; }
inline std::filesystem::path corpus_dir() { return fixtures() / "corpus"; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<unsigned> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("pitchnet_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
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

}  // namespace testing_support

#define EXPECT_CODE(stmt, expected)                                           \
  do {                                                                        \
    try {                                                                     \
      stmt;                                                                   \
      ADD_FAILURE() << "expected " << pitchnet::to_string(expected);          \
    } catch (const pitchnet::Error& e_) {                                     \
      EXPECT_EQ(e_.code(), expected) << e_.what();                            \
    }                                                                         \
  } while (0)

#endif  // PITCHNET_TESTS_SUPPORT_HPP
