#pragma once

#include "switchsynth/certificates.hpp"
#include "switchsynth/core.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace switchsynth {

using Json = nlohmann::json;

std::string read_text(const std::string& path);
/// Writes atomically enough for our purposes; creates parent directories.
void write_text(const std::string& path, const std::string& content);

/// Deterministic JSON text (sorted keys, two-space indent, trailing newline).
std::string dump_json(const Json& j);
Json parse_json(const std::string& text, const std::string& what);

Json matrix_to_json(const Matrix& m);
Json vector_to_json(const Vector& v);

/// Nested row-major array → matrix. `rows`/`cols` of −1 accept any size.
/// Throws SchemaError naming the JSON pointer of the offending element.
Matrix json_to_matrix(const Json& j, const std::string& pointer, int rows = -1, int cols = -1);
Vector json_to_vector(const Json& j, const std::string& pointer, int size = -1);
double json_number(const Json& j, const std::string& pointer);
const Json& json_field(const Json& obj, const char* key, const std::string& pointer);

Json certificate_to_json(const ModeCertificate& c);
ModeCertificate certificate_from_json(const Json& j, const std::string& pointer);
Json tube_to_json(const TubeParameters& t);
TubeParameters tube_from_json(const Json& j, const std::string& pointer);

/// %.17g formatting used in CSV outputs.
std::string format_double(double v);

}  // namespace switchsynth
