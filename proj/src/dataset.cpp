#include "robloc/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

#include "robloc/errors.hpp"

namespace robloc {

std::size_t Truth::corrupted_count() const {
  return static_cast<std::size_t>(std::count(corrupted.begin(), corrupted.end(), true));
}

namespace {

void put(std::ostream& os, double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  os << buf;
}

}  // namespace

void write_dataset(std::ostream& os, const Dataset& data) {
  const bool has_truth = data.truth.has_value();
  os << data.n() << ' ' << data.d() << ' ' << (has_truth ? 1 : 0) << '\n';
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index j = 0; j < data.d(); ++j) {
      if (j) os << ' ';
      put(os, data.samples(i, j));
    }
    os << '\n';
  }
  if (!has_truth) return;
  const Truth& t = *data.truth;
  if (t.location.size() != data.d() || static_cast<Eigen::Index>(t.corrupted.size()) != data.n()) {
    throw DimensionMismatch("truth does not match dataset shape");
  }
  for (Eigen::Index j = 0; j < data.d(); ++j) {
    if (j) os << ' ';
    put(os, t.location[j]);
  }
  os << '\n';
  for (std::size_t i = 0; i < t.corrupted.size(); ++i) {
    if (i) os << ' ';
    os << (t.corrupted[i] ? '1' : '0');
  }
  os << '\n';
}

Dataset read_dataset(std::istream& is) {
  long n = 0;
  long d = 0;
  int has_truth = 0;
  if (!(is >> n >> d >> has_truth) || n < 0 || d < 1 || (has_truth != 0 && has_truth != 1)) {
    throw ConfigError("malformed dataset header");
  }
  Dataset data;
  data.samples.resize(n, d);
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < d; ++j) {
      if (!(is >> data.samples(i, j))) throw ConfigError("truncated dataset body");
    }
  }
  if (has_truth) {
    Truth t;
    t.location.resize(d);
    for (long j = 0; j < d; ++j) {
      if (!(is >> t.location[j])) throw ConfigError("truncated truth location");
    }
    t.corrupted.resize(n);
    for (long i = 0; i < n; ++i) {
      int flag = 0;
      if (!(is >> flag) || (flag != 0 && flag != 1)) throw ConfigError("bad corruption mask");
      t.corrupted[i] = flag == 1;
    }
    data.truth = std::move(t);
  }
  return data;
}

void save_dataset(const std::string& path, const Dataset& data) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open " + path + " for writing");
  write_dataset(os, data);
  if (!os) throw ConfigError("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path);
  return read_dataset(is);
}

}  // namespace robloc
