#include "switchsynth/io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace switchsynth {

namespace {

[[noreturn]] void schema(const std::string& pointer, const std::string& msg) {
  throw Error(ErrorCode::SchemaError, (pointer.empty() ? "/" : pointer) + ": " + msg);
}

}  // namespace

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << content;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path);
}

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::SchemaError, what + ": invalid JSON (" + e.what() + ")");
  }
}

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json vector_to_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

double json_number(const Json& j, const std::string& pointer) {
  if (!j.is_number()) schema(pointer, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) schema(pointer, "expected a finite number");
  return v;
}

const Json& json_field(const Json& obj, const char* key, const std::string& pointer) {
  if (!obj.is_object()) schema(pointer, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) schema(pointer + "/" + key, "missing required field");
  return *it;
}

Vector json_to_vector(const Json& j, const std::string& pointer, int size) {
  if (!j.is_array()) schema(pointer, "expected an array");
  if (size >= 0 && static_cast<int>(j.size()) != size)
    schema(pointer, "expected " + std::to_string(size) + " entries, found " +
                        std::to_string(j.size()));
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = json_number(j[i], pointer + "/" + std::to_string(i));
  return v;
}

Matrix json_to_matrix(const Json& j, const std::string& pointer, int rows, int cols) {
  if (!j.is_array()) schema(pointer, "expected an array of rows");
  if (rows >= 0 && static_cast<int>(j.size()) != rows)
    schema(pointer, "expected " + std::to_string(rows) + " rows, found " + std::to_string(j.size()));
  const int r = static_cast<int>(j.size());
  int c = cols;
  if (c < 0) c = r > 0 && j[0].is_array() ? static_cast<int>(j[0].size()) : 0;
  Matrix m(r, c);
  for (int i = 0; i < r; ++i) {
    const std::string row_ptr = pointer + "/" + std::to_string(i);
    m.row(i) = json_to_vector(j[i], row_ptr, c).transpose();
  }
  return m;
}

Json certificate_to_json(const ModeCertificate& c) {
  Json j;
  j["mode_id"] = c.mode_id;
  j["mu"] = c.mu;
  j["alpha"] = c.alpha;
  j["M"] = matrix_to_json(c.M);
  j["lmi_residual"] = c.lmi_residual;
  j["weights"] = vector_to_json(c.weights);
  return j;
}

ModeCertificate certificate_from_json(const Json& j, const std::string& pointer) {
  ModeCertificate c;
  const Json& id = json_field(j, "mode_id", pointer);
  if (!id.is_number_integer()) schema(pointer + "/mode_id", "expected an integer");
  c.mode_id = id.get<int>();
  c.mu = json_number(json_field(j, "mu", pointer), pointer + "/mu");
  c.alpha = json_number(json_field(j, "alpha", pointer), pointer + "/alpha");
  c.M = json_to_matrix(json_field(j, "M", pointer), pointer + "/M");
  if (c.M.rows() != c.M.cols()) schema(pointer + "/M", "expected a square matrix");
  c.lmi_residual = json_number(json_field(j, "lmi_residual", pointer), pointer + "/lmi_residual");
  if (j.contains("weights")) c.weights = json_to_vector(j["weights"], pointer + "/weights");
  return c;
}

Json tube_to_json(const TubeParameters& t) {
  Json j;
  j["gamma_hat"] = t.gamma_hat;
  j["epsilon"] = t.epsilon;
  j["t_end"] = t.t_end;
  j["r"] = t.r;
  j["r_proof"] = t.r_proof;
  j["mu"] = t.mu;
  j["start"] = t.start;
  j["z"] = matrix_to_json(t.z);
  j["delta_hat"] = matrix_to_json(t.delta_hat);
  return j;
}

TubeParameters tube_from_json(const Json& j, const std::string& pointer) {
  TubeParameters t;
  auto vec = [&](const char* key) {
    const Vector v = json_to_vector(json_field(j, key, pointer), pointer + "/" + key);
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  t.gamma_hat = json_number(json_field(j, "gamma_hat", pointer), pointer + "/gamma_hat");
  t.epsilon = json_number(json_field(j, "epsilon", pointer), pointer + "/epsilon");
  t.t_end = json_number(json_field(j, "t_end", pointer), pointer + "/t_end");
  t.r = vec("r");
  t.r_proof = vec("r_proof");
  t.mu = vec("mu");
  t.start = vec("start");
  const int segs = static_cast<int>(t.r.size());
  t.z = json_to_matrix(json_field(j, "z", pointer), pointer + "/z", segs);
  t.delta_hat = json_to_matrix(json_field(j, "delta_hat", pointer), pointer + "/delta_hat", segs);
  return t;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace switchsynth
