// Minimal CSV emission. Always '\n' line endings and shortest round-trip
// doubles, so repeated runs produce byte-identical files. Fields are written
// verbatim; callers keep commas out of them (structured contexts go through a
// content hash instead).
#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "credlab/common.hpp"

namespace credlab {

class CsvWriter {
  public:
    explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw Error("cannot open for writing: " + path);
    }

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << fields[i];
        }
        out_ << '\n';
    }

    void close() { out_.close(); }

  private:
    std::ofstream out_;
};

inline std::string csv_bool(bool b) { return b ? "1" : "0"; }

}  // namespace credlab
