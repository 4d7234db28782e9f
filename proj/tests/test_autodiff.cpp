#include <functional>
#include <random>

#include "cisnet/autodiff.hpp"
#include "cisnet/nn.hpp"
#include "doctest.h"

using namespace cisnet;
using D = double;

namespace {

// Central finite difference of a scalar-valued function at x.
Tensor<D> fd_grad(const std::function<D(const Tensor<D>&)>& f, Tensor<D> x, D h = 1e-5) {
  Tensor<D> g(x.shape);
  for (int64_t i = 0; i < x.size(); ++i) {
    D orig = x[i];
    x[i] = orig + h;
    D up = f(x);
    x[i] = orig - h;
    D dn = f(x);
    x[i] = orig;
    g[i] = (up - dn) / (2 * h);
  }
  return g;
}

void check_close(const Tensor<D>& a, const Tensor<D>& b, D tol) {
  REQUIRE(a.shape == b.shape);
  for (int64_t i = 0; i < a.size(); ++i) {
    D denom = std::max({std::abs(a[i]), std::abs(b[i]), D(1e-6)});
    CHECK(std::abs(a[i] - b[i]) / denom < tol);
  }
}

// Checks grad of a Var-valued scalar function against finite differences.
void gradcheck(const std::function<Var<D>(const Var<D>&)>& f, const Tensor<D>& x0, D tol = 1e-6) {
  Var<D> x = make_leaf(x0);
  Var<D> y = f(x);
  REQUIRE(y.val().size() == 1);
  Tensor<D> analytic = grad(y, {x})[0].val();
  Tensor<D> numeric = fd_grad([&](const Tensor<D>& xt) { return f(make_leaf(xt)).val()[0]; }, x0);
  check_close(analytic, numeric, tol);
}

std::mt19937_64 rng(1234);

}  // namespace

TEST_CASE("elementwise op gradients match finite differences") {
  Tensor<D> x = randn<D>({2, 5}, rng);
  gradcheck([](const Var<D>& v) { return sum_all(mul(v, v)); }, x);
  gradcheck([](const Var<D>& v) { return sum_all(square(tanh_v(v))); }, x);
  gradcheck([](const Var<D>& v) { return mean_all(exp_v(scale(v, 0.3))); }, x);
  gradcheck([](const Var<D>& v) { return sum_all(leaky_relu(v, 0.2)); }, x, 1e-4);
  Tensor<D> pos = rand_uniform<D>({3, 4}, rng, 0.5, 2.0);
  gradcheck([](const Var<D>& v) { return sum_all(log_v(v)); }, pos);
  gradcheck([](const Var<D>& v) { return sum_all(sqrt_v(v)); }, pos);
  gradcheck([](const Var<D>& v) { return sum_all(divide(make_const(Tensor<D>::ones(v.shape())), v)); },
            pos);
}

TEST_CASE("reduction and broadcast gradients") {
  Tensor<D> x = randn<D>({2, 3, 4, 4}, rng);
  gradcheck([](const Var<D>& v) { return sum_all(square(sum_hw(v))); }, x);
  gradcheck([](const Var<D>& v) { return sum_all(square(sum_nhw(v))); }, x);
  gradcheck([](const Var<D>& v) { return sum_all(square(sum_per_sample(v))); }, x);
  Tensor<D> r = randn<D>({3, 5}, rng);
  gradcheck([](const Var<D>& v) { return sum_all(square(row_sum(v))); }, r);
  gradcheck([](const Var<D>& v) { return sum_all(square(bcast_row(row_sum(v), 7))); }, r);
}

TEST_CASE("matmul gradients for all transpose combinations") {
  Tensor<D> a = randn<D>({3, 4}, rng);
  Tensor<D> b = randn<D>({4, 5}, rng);
  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      Tensor<D> as = ta ? Tensor<D>(randn<D>({4, 3}, rng)) : a;
      Tensor<D> bs = tb ? Tensor<D>(randn<D>({5, 4}, rng)) : b;
      Var<D> bv = make_leaf(bs);
      gradcheck([&](const Var<D>& v) { return sum_all(square(matmul(v, bv, ta, tb))); }, as);
      Var<D> av = make_leaf(as);
      gradcheck([&](const Var<D>& v) { return sum_all(square(matmul(av, v, ta, tb))); }, bs);
    }
}

TEST_CASE("conv2d family gradients") {
  for (int stride : {1, 2}) {
    Tensor<D> x = randn<D>({2, 3, 8, 8}, rng);
    Tensor<D> w = randn<D>({4, 3, 3, 3}, rng);
    Var<D> wv = make_leaf(w);
    gradcheck([&](const Var<D>& v) { return sum_all(square(conv2d(v, wv, stride, 1))); }, x, 1e-5);
    Var<D> xv = make_leaf(x);
    gradcheck([&](const Var<D>& v) { return sum_all(square(conv2d(xv, v, stride, 1))); }, w, 1e-5);
  }
  // transposed conv as a layer (k=4, s=2, p=1 doubles resolution)
  Tensor<D> g = randn<D>({2, 4, 4, 4}, rng);
  Tensor<D> w = randn<D>({4, 3, 4, 4}, rng);
  Var<D> wv = make_leaf(w);
  gradcheck(
      [&](const Var<D>& v) { return sum_all(square(conv2d_transpose(v, wv, 2, 1, 8, 8))); }, g,
      1e-5);
  Var<D> gv = make_leaf(g);
  gradcheck(
      [&](const Var<D>& v) { return sum_all(square(conv2d_transpose(gv, v, 2, 1, 8, 8))); }, w,
      1e-5);
}

TEST_CASE("conv2d_transpose is the adjoint of conv2d") {
  Tensor<D> x = randn<D>({1, 2, 6, 6}, rng);
  Tensor<D> w = randn<D>({3, 2, 3, 3}, rng);
  Var<D> y = conv2d(make_const(x), make_const(w), 2, 1);
  Tensor<D> g = randn<D>(y.shape(), rng);
  Var<D> xt = conv2d_transpose(make_const(g), make_const(w), 2, 1, 6, 6);
  // <conv(x), g> == <x, convT(g)>
  D lhs = 0, rhs = 0;
  for (int64_t i = 0; i < y.val().size(); ++i) lhs += y.val()[i] * g[i];
  for (int64_t i = 0; i < x.size(); ++i) rhs += x[i] * xt.val()[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("upsample2x and pool_sum2x gradients") {
  Tensor<D> x = randn<D>({2, 3, 4, 4}, rng);
  gradcheck([](const Var<D>& v) { return sum_all(square(upsample2x(v))); }, x);
  Tensor<D> y = randn<D>({2, 3, 8, 8}, rng);
  gradcheck([](const Var<D>& v) { return sum_all(square(pool_sum2x(v))); }, y);
}

TEST_CASE("shaping op gradients") {
  Tensor<D> x = randn<D>({2, 12}, rng);
  gradcheck([](const Var<D>& v) { return sum_all(square(reshape(v, {2, 3, 2, 2}))); }, x);
  gradcheck([](const Var<D>& v) { return sum_all(square(slice_cols(v, 3, 5))); }, x);
  Tensor<D> b = randn<D>({2, 4}, rng);
  Var<D> bv = make_leaf(b);
  gradcheck([&](const Var<D>& v) { return sum_all(square(concat_cols(v, bv))); }, x);
  std::vector<int> labels{3, 7};
  gradcheck([&](const Var<D>& v) { return sum_all(square(gather_rows(v, labels))); }, x);
}

TEST_CASE("softmax_nll value and gradient") {
  // uniform logits over 7 classes -> ln 7
  Tensor<D> z = Tensor<D>::zeros({3, 7});
  std::vector<int> labels{0, 3, 6};
  Var<D> loss = softmax_nll(make_const(z), labels);
  CHECK(loss.val()[0] == doctest::Approx(std::log(7.0)).epsilon(1e-9));
  Tensor<D> zr = randn<D>({4, 7}, rng);
  std::vector<int> lr{1, 0, 6, 2};
  gradcheck([&](const Var<D>& v) { return softmax_nll(v, lr); }, zr);
}

TEST_CASE("batch_l2_mean gradient") {
  Tensor<D> x = randn<D>({3, 8}, rng);
  gradcheck([](const Var<D>& v) { return batch_l2_mean(v); }, x, 1e-5);
}

TEST_CASE("double backprop: grad of gradient-norm penalty") {
  // f(x) = sum(W x)^2 per sample; penalty = mean((||d f/d x|| - 1)^2).
  // d penalty / d W checked against finite differences over W.
  Tensor<D> x0 = randn<D>({3, 4}, rng);
  Tensor<D> w0 = randn<D>({4, 4}, rng);
  auto penalty = [&](const Var<D>& w, const Var<D>& x) {
    Var<D> y = sum_all(square(matmul(x, w)));
    Var<D> gx = grad(y, {x}, /*create_graph=*/true)[0];
    Var<D> nrm = sqrt_v(add_scalar(sum_per_sample(square(gx)), 1e-12));
    return mean_all(square(add_scalar(nrm, -1.0)));
  };
  Var<D> w = make_leaf(w0);
  Var<D> x = make_leaf(x0);
  Tensor<D> analytic = grad(penalty(w, x), {w})[0].val();
  Tensor<D> numeric = fd_grad(
      [&](const Tensor<D>& wt) {
        Var<D> wv = make_leaf(wt);
        Var<D> xv = make_leaf(x0);
        return penalty(wv, xv).val()[0];
      },
      w0);
  check_close(analytic, numeric, 1e-5);
}

TEST_CASE("double backprop through conv critic") {
  Tensor<D> x0 = randn<D>({2, 2, 4, 4}, rng);
  Tensor<D> w0 = randn<D>({3, 2, 3, 3}, rng);
  auto penalty = [&](const Var<D>& w, const Var<D>& x) {
    Var<D> score = sum_all(leaky_relu(conv2d(x, w, 1, 1), 0.2));
    Var<D> gx = grad(score, {x}, true)[0];
    Var<D> nrm = sqrt_v(add_scalar(sum_per_sample(square(gx)), 1e-12));
    return mean_all(square(add_scalar(nrm, -1.0)));
  };
  Var<D> w = make_leaf(w0);
  Var<D> x = make_leaf(x0);
  Tensor<D> analytic = grad(penalty(w, x), {w})[0].val();
  Tensor<D> numeric = fd_grad(
      [&](const Tensor<D>& wt) {
        Var<D> wv = make_leaf(wt);
        Var<D> xv = make_leaf(x0);
        return penalty(wv, xv).val()[0];
      },
      w0, 1e-5);
  check_close(analytic, numeric, 1e-4);
}

TEST_CASE("grad is zero for unreachable leaves") {
  Var<D> a = make_leaf(randn<D>({2, 2}, rng));
  Var<D> b = make_leaf(randn<D>({2, 2}, rng));
  Var<D> y = sum_all(square(a));
  Tensor<D> gb = grad(y, {b})[0].val();
  for (auto v : gb.data) CHECK(v == 0.0);
}

TEST_CASE("linear layer forward and gradient") {
  ParamStore<D> store;
  Linear<D> lin(store, "lin", 4, 3, rng);
  Tensor<D> x0 = randn<D>({2, 4}, rng);
  Var<D> y = lin.forward(make_const(x0));
  REQUIRE(y.shape() == std::vector<int>{2, 3});
  // grads wrt parameters vs finite differences
  Var<D> loss = sum_all(square(lin.forward(make_const(x0))));
  auto gs = grad(loss, store.leaves());
  for (size_t pi = 0; pi < store.params.size(); ++pi) {
    auto p = store.params[pi];
    Tensor<D> numeric = fd_grad(
        [&](const Tensor<D>& pt) {
          Tensor<D> saved = p->value;
          p->value = pt;
          store.refresh_leaves();
          D v = sum_all(square(lin.forward(make_const(x0)))).val()[0];
          p->value = saved;
          store.refresh_leaves();
          return v;
        },
        p->value);
    check_close(gs[pi].val(), numeric, 1e-6);
  }
}
