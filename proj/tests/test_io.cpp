#include "jnirm/io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

using namespace jnirm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("jnirm_io_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string write(const std::string& name, const std::string& text) const {
    const fs::path p = path / name;
    std::ofstream(p) << text;
    return p.string();
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("read_csv: plain, headed and labelled tables") {
  TempDir d;
  const CsvTable plain = read_csv(d.write("a.csv", "1,2\n3,4\n"));
  CHECK(plain.header.empty());
  CHECK(plain.values.rows() == 2);
  CHECK(plain.values(1, 0) == 3.0);

  const CsvTable headed = read_csv(d.write("b.csv", "x,y\n1,NA\n\n3,4.5\n"));
  CHECK(headed.header == std::vector<std::string>{"x", "y"});
  CHECK(std::isnan(headed.values(0, 1)));
  CHECK(headed.values(1, 1) == 4.5);

  const CsvTable labelled = read_csv(d.write("c.csv", "id,q1,q2\nann,1,0\nbo,0,\n"));
  CHECK(labelled.row_label_name == "id");
  CHECK(labelled.header == std::vector<std::string>{"q1", "q2"});
  CHECK(labelled.row_labels == std::vector<std::string>{"ann", "bo"});
  CHECK(labelled.values.cols() == 2);
  CHECK(std::isnan(labelled.values(1, 1)));
}

TEST_CASE("read_csv errors") {
  TempDir d;
  CHECK_THROWS_AS(read_csv(d.file("missing.csv")), DataError);
  CHECK_THROWS_AS(read_csv(d.write("r.csv", "1,2\n3\n")), DataError);
  CHECK_THROWS_AS(read_csv(d.write("n.csv", "1,2\n3,x\n")), DataError);
  try {
    read_csv(d.write("l.csv", "1,2\n3,4\n5,6,7\n"));
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
}

TEST_CASE("write_csv round trip") {
  TempDir d;
  MatrixXd M(2, 3);
  M << 1.5, -2, 1e-12, std::numeric_limits<double>::quiet_NaN(), 3.14159265358979, 1e6;
  write_csv(d.file("m.csv"), M, {"a", "b", "c"});
  const CsvTable t = read_csv(d.file("m.csv"));
  CHECK(t.header == std::vector<std::string>{"a", "b", "c"});
  CHECK(std::isnan(t.values(1, 0)));
  CHECK(t.values(0, 0) == 1.5);
  CHECK(t.values(1, 1) == doctest::Approx(3.14159265358979).epsilon(1e-9));
  CHECK(t.values(0, 2) == doctest::Approx(1e-12));

  write_csv(d.file("l.csv"), M, {"a", "b", "c"}, "row", {"r1", "r2"});
  const CsvTable l = read_csv(d.file("l.csv"));
  CHECK(l.row_labels == std::vector<std::string>{"r1", "r2"});
  CHECK(l.values.cols() == 3);

  CHECK_THROWS_AS(write_csv(d.file("x.csv"), M, {"a"}), std::invalid_argument);
  CHECK_THROWS_AS(write_csv(d.file("x.csv"), M, {"a", "b", "c"}, "row", {"r1"}), std::invalid_argument);
  CHECK(numbered("item", 2) == std::vector<std::string>{"item1", "item2"});
}

TEST_CASE("read_network: adjacency matrix and edge list agree") {
  TempDir d;
  const NetworkData a = read_network(d.write("adj.csv", "0,1,0\n0,0,1\n1,NA,0\n"), DataKind::binary);
  CHECK(a.n_nodes() == 3);
  CHECK(a.edges(0, 1) == 1.0);
  CHECK_FALSE(a.mask(0, 0));
  CHECK_FALSE(a.mask(2, 1));
  CHECK(a.mask(1, 0));

  const NetworkData e = read_network(d.write("el.csv", "from,to\n1,2\n2,3\n3,1\n"), DataKind::binary);
  CHECK(e.n_nodes() == 3);
  CHECK(e.edges(0, 1) == 1.0);
  CHECK(e.edges(2, 0) == 1.0);
  CHECK(e.edges(1, 0) == 0.0);
  CHECK(e.mask(1, 0));

  const NetworkData big = read_network(d.file("el.csv"), DataKind::binary, 5);
  CHECK(big.n_nodes() == 5);

  const NetworkData w = read_network(d.write("w.csv", "from,to,weight\n1,2,0.5\n"), DataKind::continuous);
  CHECK(w.edges(0, 1) == 0.5);
}

TEST_CASE("read_network errors") {
  TempDir d;
  CHECK_THROWS_AS(read_network(d.write("ns.csv", "0,1,0\n0,0,1\n"), DataKind::binary), DataError);
  CHECK_THROWS_AS(read_network(d.write("nb.csv", "0,2\n1,0\n"), DataKind::binary), DataError);
  CHECK_THROWS_AS(read_network(d.write("sl.csv", "from,to\n1,1\n1,2\n"), DataKind::binary), DataError);
  CHECK_THROWS_AS(read_network(d.write("bid.csv", "from,to\n0,2\n"), DataKind::binary), DataError);
  CHECK_THROWS_AS(read_network(d.write("ex.csv", "from,to\n1,4\n"), DataKind::binary, 3), DataError);
  CHECK_THROWS_AS(read_network(d.file("none.csv"), DataKind::binary), DataError);
}

TEST_CASE("read_items") {
  TempDir d;
  const ItemResponses r = read_items(d.write("i.csv", "q1,q2,q3\n1,0,1\n0,NA,1\n"), DataKind::binary);
  CHECK(r.n_persons() == 2);
  CHECK(r.n_items() == 3);
  CHECK(r.item_ids == std::vector<std::string>{"q1", "q2", "q3"});
  CHECK_FALSE(r.mask(1, 1));
  const ItemResponses u = read_items(d.write("u.csv", "0.5,1\n2,3\n"), DataKind::continuous);
  CHECK(u.item_ids == std::vector<std::string>{"item1", "item2"});
  CHECK_THROWS_AS(read_items(d.write("b.csv", "1,2\n"), DataKind::binary), DataError);
  CHECK_THROWS_AS(read_items(d.write("e.csv", "q1,q2\n"), DataKind::binary), DataError);
}

TEST_CASE("generative parameters round trip through JSON") {
  TempDir d;
  GenerativeParams p = school56_like_params(30);
  p.rho = 0.25;
  write_generative_params(d.file("p.json"), p);
  const GenerativeParams q = read_generative_params(d.file("p.json"));
  CHECK(q.N == 30);
  CHECK(q.K == p.K);
  CHECK(q.D == p.D);
  CHECK(q.rho == doctest::Approx(0.25));
  CHECK(q.delta == doctest::Approx(p.delta));
  CHECK((q.Sigma_utheta - p.Sigma_utheta).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((q.A - p.A).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((q.Beta - p.Beta).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(q.subscale == p.subscale);
  CHECK_THROWS_AS(read_generative_params(d.write("bad.json", "{not json")), DataError);
  CHECK_THROWS_AS(read_generative_params(d.file("absent.json")), DataError);
}

TEST_CASE("bundled parameter file matches the built-in school parameters") {
  const GenerativeParams f = read_generative_params(std::string(JNIRM_DATA_DIR) + "/school56_like.json");
  const GenerativeParams b = school56_like_params(f.N);
  CHECK((f.Sigma_utheta - b.Sigma_utheta).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((f.Beta - b.Beta).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((f.A - b.A).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(f.delta == doctest::Approx(b.delta));
}
