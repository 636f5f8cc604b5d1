#include <charconv>
#include <fstream>
#include <iomanip>
#include <locale>
#include <sstream>

#include "mlda/cli/commands.hpp"
#include "mlda/errors.hpp"

namespace mlda::cli {

namespace {

std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) fields.push_back(field);
  if (!line.empty() && line.back() == sep) fields.emplace_back();
  return fields;
}

double parse_double(const std::string& text, const std::filesystem::path& path, int line) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError(path.string() + ":" + std::to_string(line) + ": bad number '" + text + "'");
  }
  return value;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

void write_trace_csv(std::ostream& out, const Trace& trace) {
  const Eigen::Index dim = trace.size() > 0 ? trace.samples.front().size() : 0;
  out.imbue(std::locale::classic());
  for (Eigen::Index i = 0; i < dim; ++i) out << "theta_" << i + 1 << ',';
  out << "accepted,log_likelihood\n";
  out << std::setprecision(17);
  for (std::size_t n = 0; n < trace.size(); ++n) {
    for (Eigen::Index i = 0; i < dim; ++i) out << trace.samples[n][i] << ',';
    out << (trace.accepted[n] ? 1 : 0) << ',' << trace.log_likelihood[n] << '\n';
  }
}

TraceFile read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty trace file " + path.string());
  strip_cr(line);
  const auto header = split(line);
  const std::size_t n_cols = header.size();
  if (n_cols < 3 || header[n_cols - 2] != "accepted" || header[n_cols - 1] != "log_likelihood") {
    throw ConfigError("trace header must end with accepted,log_likelihood: " + path.string());
  }
  TraceFile file;
  for (std::size_t i = 0; i + 2 < n_cols; ++i) {
    if (header[i] != "theta_" + std::to_string(i + 1)) {
      throw ConfigError("unexpected trace column '" + header[i] + "' in " + path.string());
    }
    file.parameter_names.push_back(header[i]);
  }
  const auto dim = static_cast<Eigen::Index>(n_cols - 2);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != n_cols) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": wrong column count");
    }
    ParameterVector theta(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      theta[i] = parse_double(fields[static_cast<std::size_t>(i)], path, line_no);
    }
    const std::string& flag = fields[n_cols - 2];
    if (flag != "0" && flag != "1") {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": accepted must be 0 or 1");
    }
    file.trace.samples.push_back(std::move(theta));
    file.trace.accepted.push_back(flag == "1");
    file.trace.log_likelihood.push_back(parse_double(fields[n_cols - 1], path, line_no));
  }
  return file;
}

Vector read_data_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open data file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty data file " + path.string());
  strip_cr(line);
  if (line != "index,x1,x2,value") {
    throw ConfigError("data file header must be index,x1,x2,value: " + path.string());
  }
  std::vector<double> values;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != 4) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected 4 columns");
    }
    values.push_back(parse_double(fields[3], path, line_no));
  }
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace mlda::cli
