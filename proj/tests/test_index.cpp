#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "structrep/index.hpp"

using namespace structrep;
namespace fs = std::filesystem;

namespace {

Matrix random_rows(Rng& rng, int n, int d) {
  Matrix m = rng.uniform_matrix<double>(n, d, 1.0);
  for (int i = 0; i < n; ++i) m.row(i).normalize();
  return m;
}

std::vector<std::string> make_ids(int n, const std::string& prefix = "g") {
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(i));
  return ids;
}

// Full sort of every gallery entry; scores recomputed from the stored floats.
std::vector<ScoredId> brute_force(const Gallery& g, const Vector& q) {
  std::vector<ScoredId> all;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < g.dim(); ++j) s += double(g.vectors()(Eigen::Index(i), j)) * q[j];
    all.push_back({g.ids()[i], s});
  }
  std::stable_sort(all.begin(), all.end(), [](const ScoredId& a, const ScoredId& b) {
    return a.confidence != b.confidence ? a.confidence > b.confidence : a.id < b.id;
  });
  return all;
}

}  // namespace

TEST_CASE("gallery build") {
  Rng rng(1);
  const Matrix one = random_rows(rng, 1, 8);
  CHECK(Gallery::build({"a"}, one).size() == 1);
  CHECK_THROWS_AS(Gallery::build({"a", "a"}, random_rows(rng, 2, 8)), BuildError);
  CHECK_THROWS_AS(Gallery::build({}, Matrix(0, 8)), BuildError);
  CHECK_THROWS_AS(Gallery::build({"a", "b"}, one), ShapeError);
  CHECK_THROWS_AS(Gallery::build({"z"}, Matrix::Zero(1, 8)), BuildError);

  std::vector<std::pair<std::string, Vector>> entries{{"a", Vector::Ones(4)}, {"b", Vector::Ones(5)}};
  CHECK_THROWS_AS(Gallery::build(entries), ShapeError);

  const Matrix raw = rng.uniform_matrix<double>(1000, 16, 3.0);
  const Gallery g = Gallery::build(make_ids(1000), raw);
  for (std::size_t i = 0; i < g.size(); ++i) {
    REQUIRE(std::abs(g.vectors().row(Eigen::Index(i)).cast<double>().norm() - 1.0) < 1e-6);
  }
}

TEST_CASE("search basics") {
  Rng rng(2);
  const Matrix m = random_rows(rng, 50, 12);
  const Gallery g = Gallery::build(make_ids(50), m);

  const QueryResult self = g.search(m.row(17).transpose(), 3, "q");
  CHECK(self.query_id == "q");
  CHECK(self.ranked.size() == 3);
  CHECK(self.ranked[0].id == "g17");
  CHECK(self.ranked[0].confidence == doctest::Approx(1.0).epsilon(1e-6));

  const QueryResult all = g.search(m.row(0).transpose(), 50);
  CHECK(all.ranked.size() == 50);
  for (std::size_t i = 1; i < all.ranked.size(); ++i) CHECK(all.ranked[i - 1].confidence >= all.ranked[i].confidence);
  CHECK(g.search(m.row(0).transpose(), 500).ranked.size() == 50);

  CHECK_THROWS_AS(g.search(m.row(0).transpose(), 0), PreconditionError);
  CHECK_THROWS_AS(g.search(2.0 * m.row(0).transpose(), 3), PreconditionError);
  CHECK_THROWS_AS(g.search(Vector::Ones(5).normalized(), 3), ShapeError);
}

TEST_CASE("search equals a brute-force full sort, ties included") {
  Rng rng(3);
  // Coarsely quantised directions plus exact duplicates make ties common.
  Matrix base = rng.uniform_matrix<double>(250, 6, 1.0);
  base = (base * 2.0).array().round().matrix();
  for (Eigen::Index i = 0; i < base.rows(); ++i) {
    if (base.row(i).isZero()) base(i, 0) = 1.0;
  }
  Matrix m(1000, 6);
  for (int i = 0; i < 1000; ++i) m.row(i) = base.row(i % 250);
  std::vector<std::string> ids = make_ids(1000);
  Rng shuffle_rng(4);
  shuffle_rng.shuffle(ids.begin(), ids.end());
  const Gallery g = Gallery::build(ids, m);

  for (int q = 0; q < 200; ++q) {
    Vector query = rng.uniform_matrix<double>(6, 1, 1.0);
    if (q % 3 == 0) query = m.row(q).transpose();
    query.normalize();
    const std::size_t k = 1 + rng.below(40);
    const auto expect = brute_force(g, query);
    const QueryResult got = g.search(query, k);
    REQUIRE(got.ranked.size() == k);
    for (std::size_t i = 0; i < k; ++i) {
      REQUIRE(got.ranked[i].id == expect[i].id);
      REQUIRE(got.ranked[i].confidence == expect[i].confidence);
    }
  }
}

TEST_CASE("batch_search equals repeated search") {
  Rng rng(5);
  const Gallery g = Gallery::build(make_ids(300), random_rows(rng, 300, 10));
  const Matrix queries = random_rows(rng, 100, 10);
  const auto qids = make_ids(100, "q");
  const auto batch = g.batch_search(queries, 7, qids);
  REQUIRE(batch.size() == 100);
  for (int i = 0; i < 100; ++i) CHECK(batch[i] == g.search(queries.row(i).transpose(), 7, qids[i]));

  const auto single = g.batch_search(queries.topRows(1), 4);
  CHECK(single.front() == g.search(queries.row(0).transpose(), 4));
  CHECK(g.batch_search(Matrix(0, 10), 5).empty());
  CHECK_THROWS_AS(g.batch_search(queries, 3, std::span<const std::string>(qids.data(), 3)), ShapeError);
}

TEST_CASE("embedding file round trip and layout") {
  Rng rng(6);
  EmbeddingSet set;
  set.ids = {"src-000001", "syn-000001", "dis-000004", "\xc3\xa9t\xc3\xa9"};
  set.vectors = random_rows(rng, 4, 5).cast<float>().cast<double>();
  const fs::path dir = fs::temp_directory_path() / "structrep_test_semb";
  fs::create_directories(dir);
  write_embeddings(dir / "a.semb", set);
  const EmbeddingSet back = read_embeddings(dir / "a.semb");
  CHECK(back.ids == set.ids);
  CHECK(back.vectors == set.vectors);

  std::ifstream in(dir / "a.semb", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  CHECK(bytes.substr(0, 4) == "SEMB");
  CHECK(bytes.substr(4, 4) == std::string("\x01\x00\x00\x00", 4));
  CHECK(bytes.substr(8, 4) == std::string("\x04\x00\x00\x00", 4));
  CHECK(bytes.substr(12, 4) == std::string("\x05\x00\x00\x00", 4));
  CHECK(bytes.substr(16, 4) == std::string("\x0a\x00\x00\x00", 4));
  CHECK(bytes.substr(20, 10) == "src-000001");
  std::size_t id_bytes = 0;
  for (const auto& id : set.ids) id_bytes += 4 + id.size();
  CHECK(bytes.size() == 16 + id_bytes + 4 * 5 * 4);

  std::ofstream(dir / "trunc.semb", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  CHECK_THROWS_AS(read_embeddings(dir / "trunc.semb"), IoError);
  std::ofstream(dir / "extra.semb", std::ios::binary) << bytes << "x";
  CHECK_THROWS_AS(read_embeddings(dir / "extra.semb"), IoError);
  std::string bad = bytes;
  bad[4] = 2;
  std::ofstream(dir / "ver.semb", std::ios::binary) << bad;
  CHECK_THROWS_AS(read_embeddings(dir / "ver.semb"), IoError);
  fs::remove_all(dir);
}
