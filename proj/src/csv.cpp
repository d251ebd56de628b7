#include "feederopt/csv.hpp"

#include <algorithm>
#include <cctype>

namespace feederopt {

cplx parse_complex(const std::string& text) {
  std::string s = text;
  s.erase(std::remove_if(s.begin(), s.end(),
                         [](unsigned char c) { return std::isspace(c); }),
          s.end());
  if (s.empty()) throw ValidationError("empty complex literal");
  if (s.back() == 'j' || s.back() == 'i') {
    s.pop_back();
    // find split point: last '+'/'-' that is not an exponent sign
    int split = -1;
    for (int i = static_cast<int>(s.size()) - 1; i > 0; --i) {
      if ((s[i] == '+' || s[i] == '-') &&
          !(s[i - 1] == 'e' || s[i - 1] == 'E')) {
        split = i;
        break;
      }
    }
    if (split < 0) {
      // pure imaginary like "0.5j"
      return {0.0, std::strtod(s.c_str(), nullptr)};
    }
    double re = std::strtod(s.substr(0, split).c_str(), nullptr);
    std::string im_s = s.substr(split);
    double im = (im_s == "+" || im_s == "-") ? (im_s == "+" ? 1.0 : -1.0)
                                             : std::strtod(im_s.c_str(), nullptr);
    return {re, im};
  }
  char* end = nullptr;
  double re = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw ValidationError("bad numeric literal '" + text + "'");
  return {re, 0.0};
}

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    while (!f.empty() && std::isspace(static_cast<unsigned char>(f.front())))
      f.erase(f.begin());
    while (!f.empty() && std::isspace(static_cast<unsigned char>(f.back())))
      f.pop_back();
  }
  return out;
}

int CsvTable::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

int CsvTable::require_column(const std::string& name,
                             const std::string& file) const {
  int c = column(name);
  if (c < 0)
    throw ValidationError(file + ": missing required column '" + name + "'");
  return c;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  CsvTable t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_fields(line);
    if (!have_header) {
      t.header = fields;
      have_header = true;
    } else {
      t.rows.push_back(fields);
    }
  }
  if (!have_header) throw ValidationError(path + ": empty file");
  return t;
}

CsvWriter::CsvWriter(const std::string& path) : out_(path), path_(path) {
  if (!out_) throw ValidationError("cannot open for writing: " + path);
}

void CsvWriter::write_row(const std::vector<std::string>& fields) {
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << fields[i];
  }
  out_ << '\n';
}

void CsvWriter::close() {
  out_.close();
  if (out_.fail()) throw ValidationError("write failed: " + path_);
}

}  // namespace feederopt
