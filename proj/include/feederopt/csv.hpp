#pragma once

// Minimal line/field oriented reader-writer for the plain-text artifact
// formats. All files have a one-line header; fields are comma separated with
// no quoting (values never contain commas).

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "feederopt/common.hpp"

namespace feederopt {

std::vector<std::string> split_fields(const std::string& line, char sep = ',');

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 if absent
  int require_column(const std::string& name, const std::string& file) const;
};

// Reads a whole CSV file; skips blank lines and lines starting with '#'.
CsvTable read_csv(const std::string& path);

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);
  void write_row(const std::vector<std::string>& fields);
  void close();

 private:
  std::ofstream out_;
  std::string path_;
};

}  // namespace feederopt
