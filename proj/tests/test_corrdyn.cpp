#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "nert/corrdyn.hpp"

using namespace nert;

namespace {

struct Bench {
  ModeGrid grid;
  OccupationField n;
  DoubledRep rep;
  InteractionKernel kernel;
  LiouvillePair pair;
  WickContext w;
  NormalPolynomial lint;
  Mat rho;

  Bench(ModeGrid g, OccupationSpec occ, int n_max, InteractionKernel k = InteractionKernel({1.0, 0.0}, 0.3))
      : grid(std::move(g)),
        n(grid, occ),
        rep(grid, n_max),
        kernel(k),
        pair(rep, kernel, 1.0),
        w(grid, n),
        lint(interaction_polynomial(w, kernel)),
        rho(reference_state(rep, n)) {}

  Mat R(const NormalPolynomial& p) const { return realize(rep, w, rho, p); }
};

double rel(const Mat& a, const Mat& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

NormalPolynomial random_poly(const ModeGrid& g, std::mt19937& rng, int terms, int max_degree) {
  std::uniform_int_distribution<int> spec(0, 3), mode(0, static_cast<int>(g.size()) - 1), deg(1, max_degree);
  std::normal_distribution<double> nd;
  NormalPolynomial p;
  for (int i = 0; i < terms; ++i) {
    Monomial m;
    int d = deg(rng);
    for (int k = 0; k < d; ++k) m.push_back(Generator::from_species(spec(rng), mode(rng)));
    p.add(sorted(m), {nd(rng), nd(rng)});
  }
  return p;
}

}  // namespace

TEST(Wick, NormalFormOfOrderedPair) {
  ModeGrid g = build_grid(1, 1, 1.0, -1.0);
  auto n = occupation(g, GaussianForm{0.4, 1.0});
  WickContext w(g, n);
  Generator x{Branch::Minus, false, 0}, y{Branch::Minus, true, 0};
  auto p = normal_form(w, {x, y});
  EXPECT_EQ(p.coefficient({}), w.contract(x, y));
  EXPECT_EQ(p.coefficient(sorted({x, y})), cplx(1.0));
}

TEST(Wick, RealizedMonomialsHaveZeroExpectation) {
  Bench s(build_grid(1, 2, 1.0, -1.0), GaussianForm{0.05, 0.5}, 8);
  std::mt19937 rng(11);
  for (int i = 0; i < 20; ++i) {
    NormalPolynomial p = random_poly(s.grid, rng, 1, 4);
    EXPECT_LT(std::abs(s.R(p).trace()), 1e-7);
  }
  EXPECT_NEAR(std::abs(s.R(NormalPolynomial::constant(1.0)).trace() - 1.0), 0.0, 1e-14);
}

TEST(Wick, MultiplicationMatchesArrays) {
  // Realize(:A::B:) built from the Wick product equals applying the
  // generators of A (as an ordered string) to the realization of B.
  Bench s(build_grid(1, 2, 1.0, -1.0), VacuumForm{}, 6);
  std::mt19937 rng(12);
  std::uniform_int_distribution<int> spec(0, 3), mode(0, 1);
  for (int i = 0; i < 10; ++i) {
    std::vector<Generator> word;
    for (int k = 0; k < 3; ++k) word.push_back(Generator::from_species(spec(rng), mode(rng)));
    NormalPolynomial b = random_poly(s.grid, rng, 2, 2);
    Mat direct = s.R(b);
    for (auto it = word.rbegin(); it != word.rend(); ++it) direct = s.rep.apply_weighted(*it, direct);
    NormalPolynomial prod = multiply(s.w, normal_form(s.w, word), b);
    EXPECT_LT(rel(s.R(prod), direct), 1e-12);
  }
}

TEST(Wick, InteractionPolynomialMatchesLint) {
  Bench s(build_grid(1, 3, 1.0, -1.0), GaussianForm{0.02, 0.3}, 4);
  Mat ref = s.pair.apply_lint(s.rho);
  EXPECT_LT(rel(s.R(s.lint), ref), 1e-7);
}

TEST(Star, InvolutionAndArrays) {
  Bench s(build_grid(1, 2, 1.0, -1.0), VacuumForm{}, 6);
  std::mt19937 rng(13);
  for (int i = 0; i < 10; ++i) {
    NormalPolynomial p = random_poly(s.grid, rng, 3, 3);
    EXPECT_TRUE(star_involution(star_involution(p)) == p);
    EXPECT_LT(rel(s.R(star_involution(p)), star(s.R(p))), 1e-12);
  }
}

TEST(Star, RealElementFixed) {
  Bench s(build_grid(1, 3, 1.0, -1.0), VacuumForm{}, 2);
  NormalPolynomial p = NormalPolynomial::monomial({{Branch::Minus, true, 0}}, 1.0) +
                       NormalPolynomial::monomial({{Branch::Plus, true, 0}}, 1.0);
  EXPECT_TRUE(star_involution(p) == p);
}

TEST(Star, LintIsReal) {
  Bench s(build_grid(1, 3, 1.0, -1.0), GaussianForm{0.1, 0.2}, 2);
  EXPECT_LT(distance(star_involution(s.lint), s.lint), 1e-15);
  std::mt19937 rng(14);
  for (int i = 0; i < 5; ++i) {
    NormalPolynomial x = random_poly(s.grid, rng, 3, 3);
    NormalPolynomial lhs = star_involution(multiply(s.w, s.lint, x));
    NormalPolynomial rhs = multiply(s.w, s.lint, star_involution(x));
    EXPECT_LT(distance(lhs, rhs), 1e-13);
  }
}

TEST(WickSplit, ExceedingCountIsZero) {
  Bench s(build_grid(1, 3, 1.0, -1.0), VacuumForm{}, 2);
  auto v = CorrelationVector::of({NormalPolynomial::monomial({{Branch::Minus, true, 0}})});
  EXPECT_TRUE(wick_split(s.w, s.lint, 2, v).empty());
}

TEST(WickSplit, EmptyProductGivesLint) {
  Bench s(build_grid(1, 3, 1.0, -1.0), GaussianForm{0.1, 0.2}, 2);
  auto v = wick_split(s.w, s.lint, 0, CorrelationVector::cyclic());
  ASSERT_EQ(v.terms().size(), 1u);
  ASSERT_EQ(v.terms()[0].factors.size(), 1u);
  EXPECT_TRUE(v.terms()[0].factors[0] == s.lint);
}

TEST(WickSplit, SingleCreatorAgainstArrays) {
  // Vacuum with one extra particle stays inside the truncation exactly.
  Bench s(build_grid(1, 3, 1.0, -1.0), VacuumForm{}, 3);
  auto f = NormalPolynomial::monomial({{Branch::Minus, true, 1}});
  auto v = CorrelationVector::of({f});
  NormalPolynomial l1 = flatten_F(wick_split(s.w, s.lint, 1, v));
  NormalPolynomial l0 = flatten_F(wick_split(s.w, s.lint, 0, v));
  EXPECT_FALSE(l1.empty());
  Mat ref = s.pair.apply_lint(s.R(f));
  EXPECT_LT(rel(s.R(l0 + l1), ref), 1e-12);
}

TEST(WickSplit, Completeness) {
  Bench s(build_grid(1, 3, 1.0, -1.0), GaussianForm{0.1, 0.2}, 2);
  std::mt19937 rng(15);
  for (int i = 0; i < 3; ++i) {
    std::vector<NormalPolynomial> fs{random_poly(s.grid, rng, 2, 2), random_poly(s.grid, rng, 2, 2)};
    auto v = CorrelationVector::of(fs);
    NormalPolynomial sum;
    for (int l = 0; l <= 2; ++l) sum += flatten_F(wick_split(s.w, s.lint, l, v));
    NormalPolynomial direct = multiply(s.w, s.lint, flatten_F(v));
    EXPECT_LT(distance(sum, direct), 1e-13);
  }
}

TEST(CorrelationVectorTest, SymIdempotent) {
  std::mt19937 rng(16);
  ModeGrid g = build_grid(1, 2, 1.0, -1.0);
  auto v = CorrelationVector::of({random_poly(g, rng, 2, 2), random_poly(g, rng, 2, 2), random_poly(g, rng, 1, 1)});
  EXPECT_TRUE(v.sym().sym() == v.sym());
  EXPECT_LT(distance(flatten_F(v.sym()), flatten_F(v)), 1e-15);
}

TEST(Flatten, SingleAndDisjoint) {
  ModeGrid g = build_grid(1, 2, 1.0, -1.0);
  auto a = NormalPolynomial::monomial({{Branch::Minus, true, 0}}, 2.0);
  auto b = NormalPolynomial::monomial({{Branch::Plus, false, 1}}, 3.0);
  EXPECT_TRUE(flatten_F(CorrelationVector::of({a})) == a);
  auto ab = flatten_F(CorrelationVector::of({a, b}));
  EXPECT_EQ(ab.coefficient(sorted({{Branch::Minus, true, 0}, {Branch::Plus, false, 1}})), cplx(6.0));
}

TEST(ExpPolyTest, Integrals) {
  // int_0^x e^{2is} ds and int_0^x s ds.
  ExpPoly e = ExpPoly::wave(2.0).integral_from(0.0);
  const double x = 0.7;
  EXPECT_LT(std::abs(e(x) - (std::exp(I * 2.0 * x) - 1.0) / (2.0 * I)), 1e-14);
  ExpPoly s = ExpPoly::one().integral_from(0.0).integral_from(0.0);
  EXPECT_LT(std::abs(s(x) - 0.5 * x * x), 1e-15);
  // int_0^x s e^{is} ds via product.
  ExpPoly p = (ExpPoly::one().integral_from(0.0) * ExpPoly::wave(1.0)).integral_from(0.0);
  cplx ref = (std::exp(I * x) * (1.0 - I * x) - 1.0);
  EXPECT_LT(std::abs(p(x) - ref), 1e-14);
}

TEST(ExpPolyTest, RegionIntegralMatchesQuadrature) {
  auto t = DirectedTree::from_parents({0, 1, 1});
  RateVector r{0.5, -1.5, 0.0};
  cplx exact = ordered_region_integral(t, r, 0.0, 1.0);
  cplx q = composite(
      [&](double s1) {
        cplx inner = composite([&](double s2) { return std::exp(I * (r[1] * s2)); }, 0.0, s1, 2);
        cplx inner3 = s1;
        return std::exp(I * (r[0] * s1)) * inner * inner3;
      },
      0.0, 1.0, 2);
  EXPECT_LT(std::abs(exact - q), 1e-13);
}

TEST(TreeOperatorTest, OneVertexAtRootTime) {
  Bench s(build_grid(1, 3, 1.0, -1.0), GaussianForm{0.1, 0.3}, 2);
  auto t = DirectedTree::from_parents({0});
  auto op = tree_operator(s.w, s.lint, t);
  // tau_1 = t: vertex at time 0, free dressing is the identity.
  NormalPolynomial v = tree_value(op, {{t.up_line(1)->id, 2.0}}, 2.0);
  EXPECT_LT(distance(v, s.lint), 1e-15);
  // General tau: e^{-(t - tau) L0} L_int.
  NormalPolynomial v2 = tree_value(op, {{t.up_line(1)->id, 0.5}}, 2.0);
  EXPECT_LT(distance(v2, free_evolve(s.grid, s.lint, -1.5)), 1e-13);
}

TEST(TreeOperatorTest, DisconnectedFactorizes) {
  Bench s(build_grid(1, 3, 1.0, -1.0), GaussianForm{0.1, 0.3}, 2);
  // Components {1,2} chained and {3} alone.
  auto t = DirectedTree::from_parents({0, 1, 0});
  auto op = tree_operator(s.w, s.lint, t);
  ASSERT_EQ(op.factors.size(), 2u);
  auto chain = tree_operator(s.w, s.lint, DirectedTree::from_parents({0, 1}));
  auto single = tree_operator(s.w, s.lint, DirectedTree::from_parents({0}));
  std::map<int, double> tau;
  for (const auto& l : t.lines()) tau[l.id] = 0.3 + 0.1 * l.id;
  auto sv = vertex_times(t, tau, 1.0);
  NormalPolynomial whole = op.flattened().at(sv);
  NormalPolynomial parts = concat(chain.flattened().at({sv[0], sv[1]}), single.flattened().at({sv[2]}));
  EXPECT_LT(distance(whole, parts), 1e-15);
  EXPECT_EQ(static_cast<int>(op.factors.size()), t.root_count());
}

TEST(TreeExpansion, OrderZero) {
  Bench s(build_grid(1, 3, 1.0, -1.0), GaussianForm{0.1, 0.3}, 2);
  EXPECT_TRUE(tree_expansion(s.w, s.lint, 0, 1.0, 0.0) == NormalPolynomial::constant(1.0));
}

TEST(TreeExpansion, MatchesDysonOrders1And2) {
  Bench s(build_grid(1, 3, 1.0, -1.0), GaussianForm{0.001, 0.3}, 4);
  for (int order : {1, 2}) {
    auto t0 = std::chrono::steady_clock::now();
    Mat tree = s.R(tree_expansion(s.w, s.lint, order, 1.0, 0.0));
    auto t1 = std::chrono::steady_clock::now();
    Mat dyson = dyson_apply(s.pair, order, 1.0, 0.0, s.rho).value;
    auto t2 = std::chrono::steady_clock::now();
    double e = rel(tree, dyson);
    RecordProperty("order" + std::to_string(order), std::to_string(e));
    std::printf("order %d: rel %.3e  tree %.2fs dyson %.2fs norm %.3e\n", order, e,
                std::chrono::duration<double>(t1 - t0).count(), std::chrono::duration<double>(t2 - t1).count(),
                dyson.norm());
    EXPECT_LT(e, 1e-7);
  }
}

TEST(Intertwining, OrderOneOnRandomVectors) {
  // Two single-generator factors over the vacuum: at most two particles, so
  // n_max = 2 represents everything exactly.
  Bench s(build_grid(1, 3, 1.0, -1.0), VacuumForm{}, 2);
  std::mt19937 rng(17);
  for (int i = 0; i < 3; ++i) {
    auto v = CorrelationVector::of({random_poly(s.grid, rng, 2, 1), random_poly(s.grid, rng, 2, 1)});
    Mat lhs = s.R(flatten_F(uc_order1(s.w, s.lint, v, 1.0, 0.0)));
    Mat rhs = dyson_apply(s.pair, 1, 1.0, 0.0, s.R(flatten_F(v))).value;
    EXPECT_LT(rel(lhs, rhs), 1e-8);
  }
}
