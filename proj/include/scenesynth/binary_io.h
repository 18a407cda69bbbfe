#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "scenesynth/common.h"

namespace scenesynth {

// Little-endian primitive writer/reader for the project's binary formats.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path) : out_(path, std::ios::binary) {
    SS_CHECK(out_.good(), "cannot open for writing: " + path);
  }
  void magic(const char (&tag)[5]) { out_.write(tag, 4); }
  template <typename T>
  void put(T value) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out_.write(reinterpret_cast<const char*>(bytes), sizeof(T));
  }
  void finish() {
    out_.flush();
    SS_CHECK(out_.good(), "write failed");
  }

 private:
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    SS_CHECK(in_.good(), "cannot open for reading: " + path);
  }
  void expectMagic(const char (&tag)[5]) {
    char got[4];
    in_.read(got, 4);
    SS_CHECK(in_.good() && std::memcmp(got, tag, 4) == 0,
             path_ + ": bad magic, expected " + std::string(tag, 4));
  }
  template <typename T>
  T get() {
    unsigned char bytes[sizeof(T)];
    in_.read(reinterpret_cast<char*>(bytes), sizeof(T));
    SS_CHECK(in_.good(), path_ + ": truncated file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
  void expectEnd() {
    in_.peek();
    SS_CHECK(in_.eof(), path_ + ": trailing bytes");
  }

 private:
  std::ifstream in_;
  std::string path_;
};

}  // namespace scenesynth
