#include "jepa/core/ops.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace jepa {

namespace {

constexpr Scalar kGeluC = 0.7978845608028654f;  // sqrt(2/pi)
constexpr Scalar kGeluA = 0.044715f;

bool want_grad(std::initializer_list<const Tensor*> ps) {
  if (!grad_enabled()) return false;
  for (const Tensor* p : ps)
    if (p->defined() && p->requires_grad()) return true;
  return false;
}

Tensor raw_out(Shape s, bool track, std::vector<Tensor> parents) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(s);
  n->values.resize(shape_numel(n->shape));
  n->requires_grad = track;
  if (track) n->parents = std::move(parents);
  return Tensor(std::move(n));
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

// NaN or Inf anywhere in a reduction's input survives IEEE summation, so one
// check on the accumulated double catches silent non-finite propagation.
double checked_scalar(const char* op, double s) {
  if (!std::isfinite(s))
    throw std::runtime_error(std::string(op) + ": non-finite result");
  return s;
}

int norm_axis(const char* op, int axis, int rank) {
  int ax = axis < 0 ? axis + rank : axis;
  if (ax < 0 || ax >= rank)
    throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) +
                                " out of rank " + std::to_string(rank));
  return ax;
}

void softmax_rows_inplace(MatMap a) {
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    auto row = a.row(i).array();
    Scalar m = row.maxCoeff();
    row = (row - m).exp();
    row /= row.sum();
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  bool track = want_grad({&a, &b});
  Tensor out = raw_out(a.shape(), track, {a, b});
  out.values() = a.values() + b.values();
  if (track)
    out.node()->backward_fn = [](TensorNode& n) {
      for (Tensor& p : n.parents)
        if (p.requires_grad()) p.grad_ref() += n.grad;
    };
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  bool track = want_grad({&a, &b});
  Tensor out = raw_out(a.shape(), track, {a, b});
  out.values() = a.values() - b.values();
  if (track)
    out.node()->backward_fn = [](TensorNode& n) {
      if (n.parents[0].requires_grad()) n.parents[0].grad_ref() += n.grad;
      if (n.parents[1].requires_grad()) n.parents[1].grad_ref() -= n.grad;
    };
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  bool track = want_grad({&a, &b});
  Tensor out = raw_out(a.shape(), track, {a, b});
  out.values() = a.values() * b.values();
  if (track)
    out.node()->backward_fn = [](TensorNode& n) {
      if (n.parents[0].requires_grad()) n.parents[0].grad_ref() += n.grad * n.parents[1].values();
      if (n.parents[1].requires_grad()) n.parents[1].grad_ref() += n.grad * n.parents[0].values();
    };
  return out;
}

Tensor scale(const Tensor& a, Scalar c) {
  bool track = want_grad({&a});
  Tensor out = raw_out(a.shape(), track, {a});
  out.values() = a.values() * c;
  if (track)
    out.node()->backward_fn = [c](TensorNode& n) {
      if (n.parents[0].requires_grad()) n.parents[0].grad_ref() += n.grad * c;
    };
  return out;
}

Tensor gelu(const Tensor& a) {
  bool track = want_grad({&a});
  Tensor out = raw_out(a.shape(), track, {a});
  const ArrayX& x = a.values();
  auto th = std::make_shared<ArrayX>((kGeluC * (x + kGeluA * x.cube())).tanh());
  out.values() = 0.5f * x * (1.0f + *th);
  if (track) {
    out.node()->backward_fn = [th](TensorNode& n) {
      if (!n.parents[0].requires_grad()) return;
      const ArrayX& x = n.parents[0].values();
      const ArrayX& t = *th;
      n.parents[0].grad_ref() +=
          n.grad * (0.5f * (1.0f + t) +
                    0.5f * x * (1.0f - t.square()) * kGeluC * (1.0f + 3.0f * kGeluA * x.square()));
    };
    out.node()->drop_ctx = [th] { th->resize(0); };
  }
  return out;
}

Tensor add_bcast0(const Tensor& a, const Tensor& e) {
  if (e.rank() >= a.rank())
    throw std::invalid_argument("add_bcast0: rank " + std::to_string(e.rank()) +
                                " does not broadcast into rank " + std::to_string(a.rank()));
  for (int i = 0; i < e.rank(); ++i)
    if (e.dim(i) != a.dim(a.rank() - e.rank() + i))
      throw std::invalid_argument("add_bcast0: trailing dims " + shape_str(e.shape()) +
                                  " do not match " + shape_str(a.shape()));
  Eigen::Index ne = e.numel();
  Eigen::Index reps = a.numel() / ne;
  bool track = want_grad({&a, &e});
  Tensor out = raw_out(a.shape(), track, {a, e});
  out.values() = a.values();
  out.mat(reps, ne).rowwise() += ConstMatMap(e.data(), 1, ne).row(0);
  if (track)
    out.node()->backward_fn = [reps, ne](TensorNode& n) {
      if (n.parents[0].requires_grad()) n.parents[0].grad_ref() += n.grad;
      if (n.parents[1].requires_grad()) {
        ConstMatMap g(n.grad.data(), reps, ne);
        MatMap(n.parents[1].grad_ref().data(), 1, ne).row(0) += g.colwise().sum();
      }
    };
  return out;
}

Tensor add_rows(const Tensor& a, const Tensor& e) {
  if (a.rank() < 2 || e.rank() != a.rank() - 1)
    throw std::invalid_argument("add_rows: rank mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(e.shape()));
  Eigen::Index d = a.dim(-1), s = a.dim(-2);
  Shape want(a.shape());
  want.erase(want.end() - 2);
  if (e.shape() != want)
    throw std::invalid_argument("add_rows: " + shape_str(e.shape()) + " does not broadcast into " +
                                shape_str(a.shape()));
  Eigen::Index groups = a.numel() / (s * d);
  bool track = want_grad({&a, &e});
  Tensor out = raw_out(a.shape(), track, {a, e});
  out.values() = a.values();
  {
    MatMap o = out.mat(groups * s, d);
    ConstMatMap em = e.mat(groups, d);
    for (Eigen::Index g = 0; g < groups; ++g)
      o.middleRows(g * s, s).rowwise() += em.row(g);
  }
  if (track)
    out.node()->backward_fn = [groups, s, d](TensorNode& n) {
      if (n.parents[0].requires_grad()) n.parents[0].grad_ref() += n.grad;
      if (n.parents[1].requires_grad()) {
        ConstMatMap g(n.grad.data(), groups * s, d);
        MatMap de(n.parents[1].grad_ref().data(), groups, d);
        for (Eigen::Index i = 0; i < groups; ++i)
          de.row(i) += g.middleRows(i * s, s).colwise().sum();
      }
    };
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw std::invalid_argument("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape) +
                                " changes element count");
  bool track = want_grad({&a});
  Tensor out = raw_out(std::move(shape), track, {a});
  out.values() = a.values();
  if (track)
    out.node()->backward_fn = [](TensorNode& n) {
      if (n.parents[0].requires_grad()) n.parents[0].grad_ref() += n.grad;
    };
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  int rank = parts[0].rank();
  int ax = norm_axis("concat", axis, rank);
  Shape os = parts[0].shape();
  os[size_t(ax)] = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != rank)
      throw std::invalid_argument("concat: rank mismatch " + shape_str(p.shape()) + " vs " +
                                  shape_str(parts[0].shape()));
    for (int i = 0; i < rank; ++i)
      if (i != ax && p.dim(i) != parts[0].dim(i))
        throw std::invalid_argument("concat: dim " + std::to_string(i) + " mismatch " +
                                    shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
    os[size_t(ax)] += p.dim(ax);
  }

  Eigen::Index tail = 1;
  for (int i = ax + 1; i < rank; ++i) tail *= os[size_t(i)];
  Eigen::Index outer = 1;
  for (int i = 0; i < ax; ++i) outer *= os[size_t(i)];

  std::vector<Eigen::Index> seg(parts.size());
  Eigen::Index out_seg = 0;
  for (size_t p = 0; p < parts.size(); ++p) {
    seg[p] = parts[p].dim(ax) * tail;
    out_seg += seg[p];
  }

  bool track = grad_enabled() && [&] {
    for (const Tensor& p : parts)
      if (p.requires_grad()) return true;
    return false;
  }();
  Tensor out = raw_out(std::move(os), track, parts);
  {
    Scalar* od = out.data();
    for (Eigen::Index o = 0; o < outer; ++o) {
      Eigen::Index off = o * out_seg;
      for (size_t p = 0; p < parts.size(); ++p) {
        std::memcpy(od + off, parts[p].data() + o * seg[p], size_t(seg[p]) * sizeof(Scalar));
        off += seg[p];
      }
    }
  }
  if (track)
    out.node()->backward_fn = [outer, out_seg, seg](TensorNode& n) {
      for (Eigen::Index o = 0; o < outer; ++o) {
        Eigen::Index off = o * out_seg;
        for (size_t p = 0; p < n.parents.size(); ++p) {
          Tensor& par = n.parents[p];
          if (par.requires_grad())
            Eigen::Map<ArrayX>(par.grad_ref().data() + o * seg[p], seg[p]) +=
                Eigen::Map<const ArrayX>(n.grad.data() + off, seg[p]);
          off += seg[p];
        }
      }
    };
  return out;
}

Tensor slice(const Tensor& a, int axis, Eigen::Index start, Eigen::Index len) {
  int ax = norm_axis("slice", axis, a.rank());
  if (start < 0 || len <= 0 || start + len > a.dim(ax))
    throw std::invalid_argument("slice: range [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") out of dim " +
                                std::to_string(a.dim(ax)));
  Shape os = a.shape();
  os[size_t(ax)] = len;
  Eigen::Index tail = 1;
  for (int i = ax + 1; i < a.rank(); ++i) tail *= a.dim(i);
  Eigen::Index outer = 1;
  for (int i = 0; i < ax; ++i) outer *= a.dim(i);
  Eigen::Index in_seg = a.dim(ax) * tail, out_seg = len * tail, skip = start * tail;

  bool track = want_grad({&a});
  Tensor out = raw_out(std::move(os), track, {a});
  for (Eigen::Index o = 0; o < outer; ++o)
    std::memcpy(out.data() + o * out_seg, a.data() + o * in_seg + skip,
                size_t(out_seg) * sizeof(Scalar));
  if (track)
    out.node()->backward_fn = [outer, in_seg, out_seg, skip](TensorNode& n) {
      if (!n.parents[0].requires_grad()) return;
      ArrayX& g = n.parents[0].grad_ref();
      for (Eigen::Index o = 0; o < outer; ++o)
        Eigen::Map<ArrayX>(g.data() + o * in_seg + skip, out_seg) +=
            Eigen::Map<const ArrayX>(n.grad.data() + o * out_seg, out_seg);
    };
  return out;
}

Tensor stack0(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("stack0: no inputs");
  for (const Tensor& p : parts) check_same_shape("stack0", parts[0], p);
  Shape os;
  os.push_back(Eigen::Index(parts.size()));
  for (Eigen::Index d : parts[0].shape()) os.push_back(d);
  Eigen::Index seg = parts[0].numel();

  bool track = grad_enabled() && [&] {
    for (const Tensor& p : parts)
      if (p.requires_grad()) return true;
    return false;
  }();
  Tensor out = raw_out(std::move(os), track, parts);
  for (size_t p = 0; p < parts.size(); ++p)
    std::memcpy(out.data() + Eigen::Index(p) * seg, parts[p].data(), size_t(seg) * sizeof(Scalar));
  if (track)
    out.node()->backward_fn = [seg](TensorNode& n) {
      for (size_t p = 0; p < n.parents.size(); ++p)
        if (n.parents[p].requires_grad())
          n.parents[p].grad_ref() +=
              Eigen::Map<const ArrayX>(n.grad.data() + Eigen::Index(p) * seg, seg);
    };
  return out;
}

Tensor gather_tokens(const Tensor& a, std::vector<Eigen::Index> idx) {
  if (a.rank() < 2) throw std::invalid_argument("gather_tokens: rank < 2");
  Eigen::Index s = a.dim(-2), d = a.dim(-1);
  for (Eigen::Index i : idx)
    if (i < 0 || i >= s)
      throw std::invalid_argument("gather_tokens: index " + std::to_string(i) + " out of " +
                                  std::to_string(s) + " rows");
  Eigen::Index m = Eigen::Index(idx.size());
  Eigen::Index groups = a.numel() / (s * d);
  Shape os = a.shape();
  os[os.size() - 2] = m;

  bool track = want_grad({&a});
  Tensor out = raw_out(std::move(os), track, {a});
  auto ids = std::make_shared<std::vector<Eigen::Index>>(std::move(idx));
  {
    ConstMatMap am = a.mat(groups * s, d);
    MatMap om = out.mat(groups * m, d);
    for (Eigen::Index g = 0; g < groups; ++g)
      for (Eigen::Index r = 0; r < m; ++r) om.row(g * m + r) = am.row(g * s + (*ids)[size_t(r)]);
  }
  if (track)
    out.node()->backward_fn = [ids, groups, s, d, m](TensorNode& n) {
      if (!n.parents[0].requires_grad()) return;
      MatMap ga(n.parents[0].grad_ref().data(), groups * s, d);
      ConstMatMap go(n.grad.data(), groups * m, d);
      for (Eigen::Index g = 0; g < groups; ++g)
        for (Eigen::Index r = 0; r < m; ++r) ga.row(g * s + (*ids)[size_t(r)]) += go.row(g * m + r);
    };
  return out;
}

Tensor embedding(const Tensor& table, const std::vector<Eigen::Index>& ids) {
  if (table.rank() != 2)
    throw std::invalid_argument("embedding: table must be rank 2, got " + shape_str(table.shape()));
  Eigen::Index v = table.dim(0), d = table.dim(1);
  for (Eigen::Index i : ids)
    if (i < 0 || i >= v)
      throw std::invalid_argument("embedding: id " + std::to_string(i) + " out of vocabulary " +
                                  std::to_string(v));
  Eigen::Index n_ids = Eigen::Index(ids.size());
  if (n_ids == 0) throw std::invalid_argument("embedding: empty id list");

  bool track = want_grad({&table});
  Tensor out = raw_out({n_ids, d}, track, {table});
  auto idc = std::make_shared<std::vector<Eigen::Index>>(ids);
  {
    ConstMatMap tm = table.mat();
    MatMap om = out.mat();
    for (Eigen::Index r = 0; r < n_ids; ++r) om.row(r) = tm.row((*idc)[size_t(r)]);
  }
  if (track)
    out.node()->backward_fn = [idc, d](TensorNode& n) {
      if (!n.parents[0].requires_grad()) return;
      Eigen::Index rows = n.parents[0].numel() / d;
      MatMap gt(n.parents[0].grad_ref().data(), rows, d);
      ConstMatMap go(n.grad.data(), Eigen::Index(idc->size()), d);
      for (size_t r = 0; r < idc->size(); ++r) gt.row((*idc)[r]) += go.row(Eigen::Index(r));
    };
  return out;
}

Tensor patchify(const Tensor& frame, int patch) {
  if (frame.rank() != 3 || frame.dim(2) != 3)
    throw std::invalid_argument("patchify: frame must be [H,W,3], got " + shape_str(frame.shape()));
  Eigen::Index h = frame.dim(0), w = frame.dim(1), p = patch;
  if (p <= 0 || h % p != 0 || w % p != 0)
    throw std::invalid_argument("patchify: patch " + std::to_string(patch) +
                                " must divide frame " + shape_str(frame.shape()));
  Eigen::Index gh = h / p, gw = w / p;
  Tensor out = Tensor::zeros({gh * gw, p * p * 3});
  const Scalar* src = frame.data();
  Scalar* dst = out.data();
  for (Eigen::Index gi = 0; gi < gh; ++gi)
    for (Eigen::Index gj = 0; gj < gw; ++gj) {
      Scalar* row = dst + (gi * gw + gj) * p * p * 3;
      for (Eigen::Index pi = 0; pi < p; ++pi)
        std::memcpy(row + pi * p * 3, src + ((gi * p + pi) * w + gj * p) * 3,
                    size_t(p) * 3 * sizeof(Scalar));
    }
  return out;
}

Tensor split_heads(const Tensor& x, int heads) {
  if (x.rank() < 2) throw std::invalid_argument("split_heads: rank < 2");
  Eigen::Index s = x.dim(-2), dm = x.dim(-1);
  if (heads <= 0 || dm % heads != 0)
    throw std::invalid_argument("split_heads: width " + std::to_string(dm) +
                                " not divisible by heads " + std::to_string(heads));
  Eigen::Index dh = dm / heads;
  Eigen::Index groups = x.numel() / (s * dm);
  Shape os(x.shape().begin(), x.shape().end() - 2);
  os.insert(os.end(), {Eigen::Index(heads), s, dh});

  bool track = want_grad({&x});
  Tensor out = raw_out(std::move(os), track, {x});
  {
    const Scalar* xd = x.data();
    Scalar* od = out.data();
    for (Eigen::Index g = 0; g < groups; ++g)
      for (Eigen::Index h = 0; h < heads; ++h)
        for (Eigen::Index t = 0; t < s; ++t)
          std::memcpy(od + (((g * heads + h) * s) + t) * dh, xd + (g * s + t) * dm + h * dh,
                      size_t(dh) * sizeof(Scalar));
  }
  if (track)
    out.node()->backward_fn = [groups, heads, s, dm, dh](TensorNode& n) {
      if (!n.parents[0].requires_grad()) return;
      Scalar* gx = n.parents[0].grad_ref().data();
      const Scalar* go = n.grad.data();
      for (Eigen::Index g = 0; g < groups; ++g)
        for (Eigen::Index h = 0; h < heads; ++h)
          for (Eigen::Index t = 0; t < s; ++t)
            Eigen::Map<ArrayX>(gx + (g * s + t) * dm + h * dh, dh) +=
                Eigen::Map<const ArrayX>(go + (((g * heads + h) * s) + t) * dh, dh);
    };
  return out;
}

Tensor merge_heads(const Tensor& x) {
  if (x.rank() < 3) throw std::invalid_argument("merge_heads: rank < 3");
  Eigen::Index dh = x.dim(-1), s = x.dim(-2), heads = x.dim(-3);
  Eigen::Index groups = x.numel() / (heads * s * dh);
  Eigen::Index dm = heads * dh;
  Shape os(x.shape().begin(), x.shape().end() - 3);
  os.insert(os.end(), {s, dm});

  bool track = want_grad({&x});
  Tensor out = raw_out(std::move(os), track, {x});
  {
    const Scalar* xd = x.data();
    Scalar* od = out.data();
    for (Eigen::Index g = 0; g < groups; ++g)
      for (Eigen::Index h = 0; h < heads; ++h)
        for (Eigen::Index t = 0; t < s; ++t)
          std::memcpy(od + (g * s + t) * dm + h * dh, xd + (((g * heads + h) * s) + t) * dh,
                      size_t(dh) * sizeof(Scalar));
  }
  if (track)
    out.node()->backward_fn = [groups, heads, s, dm, dh](TensorNode& n) {
      if (!n.parents[0].requires_grad()) return;
      Scalar* gx = n.parents[0].grad_ref().data();
      const Scalar* go = n.grad.data();
      for (Eigen::Index g = 0; g < groups; ++g)
        for (Eigen::Index h = 0; h < heads; ++h)
          for (Eigen::Index t = 0; t < s; ++t)
            Eigen::Map<ArrayX>(gx + (((g * heads + h) * s) + t) * dh, dh) +=
                Eigen::Map<const ArrayX>(go + (g * s + t) * dm + h * dh, dh);
    };
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2)
    throw std::invalid_argument("matmul: inputs must be rank >= 2, got " + shape_str(a.shape()) +
                                " @ " + shape_str(b.shape()));
  Eigen::Index k = a.dim(-1);

  if (b.rank() == 2) {
    if (b.dim(0) != k)
      throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                                  " @ " + shape_str(b.shape()));
    Eigen::Index n = b.dim(1);
    Eigen::Index rows = a.numel() / k;
    Shape os = a.shape();
    os.back() = n;
    bool track = want_grad({&a, &b});
    Tensor out = raw_out(std::move(os), track, {a, b});
    out.mat(rows, n).noalias() = a.mat(rows, k) * b.mat();
    if (track)
      out.node()->backward_fn = [rows, k, n](TensorNode& n_) {
        Tensor &pa = n_.parents[0], &pb = n_.parents[1];
        ConstMatMap g(n_.grad.data(), rows, n);
        if (pa.requires_grad())
          MatMap(pa.grad_ref().data(), rows, k).noalias() += g * pb.mat().transpose();
        if (pb.requires_grad())
          MatMap(pb.grad_ref().data(), k, n).noalias() += pa.mat(rows, k).transpose() * g;
      };
    return out;
  }

  if (a.rank() != b.rank())
    throw std::invalid_argument("matmul: rank mismatch " + shape_str(a.shape()) + " @ " +
                                shape_str(b.shape()));
  for (int i = 0; i < a.rank() - 2; ++i)
    if (a.dim(i) != b.dim(i))
      throw std::invalid_argument("matmul: batch dims disagree: " + shape_str(a.shape()) + " @ " +
                                  shape_str(b.shape()));
  if (b.dim(-2) != k)
    throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                                " @ " + shape_str(b.shape()));
  Eigen::Index m = a.dim(-2), n = b.dim(-1);
  Eigen::Index groups = a.numel() / (m * k);
  Shape os = a.shape();
  os.back() = n;

  bool track = want_grad({&a, &b});
  Tensor out = raw_out(std::move(os), track, {a, b});
  {
    const Scalar *ad = a.data(), *bd = b.data();
    Scalar* od = out.data();
#pragma omp parallel for schedule(static)
    for (Eigen::Index g = 0; g < groups; ++g)
      MatMap(od + g * m * n, m, n).noalias() =
          ConstMatMap(ad + g * m * k, m, k) * ConstMatMap(bd + g * k * n, k, n);
  }
  if (track)
    out.node()->backward_fn = [groups, m, k, n](TensorNode& node) {
      Tensor &pa = node.parents[0], &pb = node.parents[1];
      Scalar* ga = pa.requires_grad() ? pa.grad_ref().data() : nullptr;
      Scalar* gb = pb.requires_grad() ? pb.grad_ref().data() : nullptr;
      const Scalar *ad = pa.data(), *bd = pb.data(), *gd = node.grad.data();
#pragma omp parallel for schedule(static)
      for (Eigen::Index g = 0; g < groups; ++g) {
        ConstMatMap gout(gd + g * m * n, m, n);
        if (ga)
          MatMap(ga + g * m * k, m, k).noalias() += gout * ConstMatMap(bd + g * k * n, k, n).transpose();
        if (gb)
          MatMap(gb + g * k * n, k, n).noalias() += ConstMatMap(ad + g * m * k, m, k).transpose() * gout;
      }
    };
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2)
    throw std::invalid_argument("linear: weight must be rank 2, got " + shape_str(w.shape()));
  Eigen::Index in = w.dim(0), out_dim = w.dim(1);
  if (x.dim(-1) != in)
    throw std::invalid_argument("linear: input width " + shape_str(x.shape()) +
                                " does not match weight " + shape_str(w.shape()));
  if (b.defined() && (b.rank() != 1 || b.dim(0) != out_dim))
    throw std::invalid_argument("linear: bias " + shape_str(b.shape()) + " does not match weight " +
                                shape_str(w.shape()));
  Eigen::Index rows = x.numel() / in;
  Shape os = x.shape();
  os.back() = out_dim;

  bool track = b.defined() ? want_grad({&x, &w, &b}) : want_grad({&x, &w});
  std::vector<Tensor> parents = b.defined() ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w};
  Tensor out = raw_out(std::move(os), track, std::move(parents));
  out.mat(rows, out_dim).noalias() = x.mat(rows, in) * w.mat();
  if (b.defined()) out.mat(rows, out_dim).rowwise() += ConstMatMap(b.data(), 1, out_dim).row(0);
  if (track)
    out.node()->backward_fn = [rows, in, out_dim](TensorNode& n) {
      Tensor &px = n.parents[0], &pw = n.parents[1];
      ConstMatMap g(n.grad.data(), rows, out_dim);
      if (px.requires_grad())
        MatMap(px.grad_ref().data(), rows, in).noalias() += g * pw.mat().transpose();
      if (pw.requires_grad())
        MatMap(pw.grad_ref().data(), in, out_dim).noalias() += px.mat(rows, in).transpose() * g;
      if (n.parents.size() > 2 && n.parents[2].requires_grad())
        MatMap(n.parents[2].grad_ref().data(), 1, out_dim).row(0) += g.colwise().sum();
    };
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Scalar eps) {
  Eigen::Index d = x.dim(-1);
  if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 || bias.dim(0) != d)
    throw std::invalid_argument("layer_norm: gain/bias must be [" + std::to_string(d) + "], got " +
                                shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
  Eigen::Index rows = x.numel() / d;

  bool track = want_grad({&x, &gain, &bias});
  Tensor out = raw_out(x.shape(), track, {x, gain, bias});
  auto mu = std::make_shared<ArrayX>(rows);
  auto istd = std::make_shared<ArrayX>(rows);
  {
    ConstMatMap xm = x.mat(rows, d);
    MatMap om = out.mat(rows, d);
    ConstMatMap gm(gain.data(), 1, d);
    ConstMatMap bm(bias.data(), 1, d);
    for (Eigen::Index r = 0; r < rows; ++r) {
      double s = 0;
      for (Eigen::Index i = 0; i < d; ++i) s += xm(r, i);
      double m = s / double(d);
      double v = 0;
      for (Eigen::Index i = 0; i < d; ++i) {
        double dd = xm(r, i) - m;
        v += dd * dd;
      }
      (*mu)[r] = Scalar(m);
      (*istd)[r] = Scalar(1.0 / std::sqrt(v / double(d) + double(eps)));
      om.row(r).array() =
          (xm.row(r).array() - (*mu)[r]) * (*istd)[r] * gm.row(0).array() + bm.row(0).array();
    }
  }
  if (track) {
    out.node()->backward_fn = [mu, istd, rows, d](TensorNode& n) {
      using RowArr = Eigen::Array<Scalar, 1, Eigen::Dynamic>;
      using RowArrD = Eigen::Array<double, 1, Eigen::Dynamic>;
      Tensor &px = n.parents[0], &pg = n.parents[1], &pb = n.parents[2];
      ConstMatMap xm(px.data(), rows, d);
      ConstMatMap g(n.grad.data(), rows, d);
      ConstMatMap gm(pg.data(), 1, d);
      RowArrD dgain = RowArrD::Zero(d), dbias = RowArrD::Zero(d);
      RowArr xhat(d), dxhat(d);
      Scalar* gx = px.requires_grad() ? px.grad_ref().data() : nullptr;
      for (Eigen::Index r = 0; r < rows; ++r) {
        xhat = (xm.row(r).array() - (*mu)[r]) * (*istd)[r];
        dxhat = g.row(r).array() * gm.row(0).array();
        if (gx) {
          double m1 = 0, m2 = 0;
          for (Eigen::Index i = 0; i < d; ++i) {
            m1 += dxhat[i];
            m2 += double(dxhat[i]) * xhat[i];
          }
          m1 /= double(d);
          m2 /= double(d);
          MatMap(gx, rows, d).row(r).array() +=
              (*istd)[r] * (dxhat - Scalar(m1) - xhat * Scalar(m2));
        }
        dgain += (g.row(r).array() * xhat).cast<double>();
        dbias += g.row(r).array().cast<double>();
      }
      if (pg.requires_grad())
        Eigen::Map<ArrayX>(pg.grad_ref().data(), d) += dgain.cast<Scalar>().transpose();
      if (pb.requires_grad())
        Eigen::Map<ArrayX>(pb.grad_ref().data(), d) += dbias.cast<Scalar>().transpose();
    };
    out.node()->drop_ctx = [mu, istd] {
      mu->resize(0);
      istd->resize(0);
    };
  }
  return out;
}

Tensor softmax_lastdim(const Tensor& x) {
  Eigen::Index d = x.dim(-1);
  Eigen::Index rows = x.numel() / d;
  bool track = want_grad({&x});
  Tensor out = raw_out(x.shape(), track, {x});
  out.values() = x.values();
  softmax_rows_inplace(out.mat(rows, d));
  if (track)
    out.node()->backward_fn = [rows, d](TensorNode& n) {
      if (!n.parents[0].requires_grad()) return;
      ConstMatMap y(n.values.data(), rows, d);
      ConstMatMap g(n.grad.data(), rows, d);
      MatMap gx(n.parents[0].grad_ref().data(), rows, d);
      for (Eigen::Index r = 0; r < rows; ++r) {
        Scalar s = (g.row(r).array() * y.row(r).array()).sum();
        gx.row(r).array() += y.row(r).array() * (g.row(r).array() - s);
      }
    };
  return out;
}

namespace {

struct AttnCtx {
  ArrayX weights;                    // packed per tile (prefix) or dense
  std::vector<Eigen::Index> offset;  // per-tile offset into one group's pack
  Eigen::Index per_group = 0;
};

// Applies -inf to the per-row masked tail, softmaxes. Exact zeros survive:
// exp(-inf) == +0 and the division keeps it.
void tile_softmax(MatMap a, const AttnMask& m, const AttnMask::Tile& t) {
  constexpr Scalar kNegInf = -std::numeric_limits<Scalar>::infinity();
  if (!t.pure)
    for (Eigen::Index r = 0; r < t.row_count; ++r) {
      Eigen::Index p = m.prefix_len[size_t(t.row_begin + r)];
      if (p < t.prefix) a.row(r).segment(p, t.prefix - p).setConstant(kNegInf);
    }
  softmax_rows_inplace(a);
}

}  // namespace

Tensor masked_attention(const Tensor& q, const Tensor& k, const Tensor& v, MaskPtr mask,
                        Tensor* attn_capture) {
  if (!mask) throw std::invalid_argument("masked_attention: null mask");
  if (q.rank() < 2 || q.rank() != k.rank() || q.rank() != v.rank())
    throw std::invalid_argument("masked_attention: rank mismatch " + shape_str(q.shape()) + ", " +
                                shape_str(k.shape()) + ", " + shape_str(v.shape()));
  Eigen::Index dh = q.dim(-1), sq = q.dim(-2), sk = k.dim(-2);
  if (k.dim(-1) != dh || v.dim(-1) != dh || v.dim(-2) != sk)
    throw std::invalid_argument("masked_attention: key/value shapes disagree: " +
                                shape_str(k.shape()) + " vs " + shape_str(v.shape()));
  for (int i = 0; i < q.rank() - 2; ++i)
    if (q.dim(i) != k.dim(i) || q.dim(i) != v.dim(i))
      throw std::invalid_argument("masked_attention: batch dims disagree");
  if (mask->rows != sq || mask->cols != sk)
    throw std::invalid_argument("masked_attention: mask " + std::to_string(mask->rows) + "x" +
                                std::to_string(mask->cols) + " does not fit " +
                                std::to_string(sq) + " queries / " + std::to_string(sk) + " keys");
  if (mask->prefix_len.empty())
    throw std::invalid_argument("masked_attention: mask not finalized");

  Eigen::Index groups = q.numel() / (sq * dh);
  const Scalar sc = Scalar(1.0 / std::sqrt(double(dh)));
  constexpr Scalar kNegInf = -std::numeric_limits<Scalar>::infinity();

  bool track = want_grad({&q, &k, &v});
  Tensor out = raw_out(q.shape(), track, {q, k, v});

  auto ctx = std::make_shared<AttnCtx>();
  const bool prefix = mask->is_prefix;
  if (prefix) {
    ctx->offset.reserve(mask->tiles.size() + 1);
    Eigen::Index off = 0;
    for (const auto& t : mask->tiles) {
      ctx->offset.push_back(off);
      off += t.row_count * t.prefix;
    }
    ctx->offset.push_back(off);
    ctx->per_group = off;
  } else {
    ctx->per_group = sq * sk;
  }
  ctx->weights.resize(groups * ctx->per_group);

  {
    const Scalar *qd = q.data(), *kd = k.data(), *vd = v.data();
    Scalar* od = out.data();
    Scalar* wd = ctx->weights.data();
    const AttnMask& m = *mask;
#pragma omp parallel for schedule(static)
    for (Eigen::Index g = 0; g < groups; ++g) {
      ConstMatMap Q(qd + g * sq * dh, sq, dh);
      ConstMatMap K(kd + g * sk * dh, sk, dh);
      ConstMatMap V(vd + g * sk * dh, sk, dh);
      MatMap O(od + g * sq * dh, sq, dh);
      if (prefix) {
        for (size_t ti = 0; ti < m.tiles.size(); ++ti) {
          const auto& t = m.tiles[ti];
          MatMap A(wd + g * ctx->per_group + ctx->offset[ti], t.row_count, t.prefix);
          A.noalias() = Q.middleRows(t.row_begin, t.row_count) * K.topRows(t.prefix).transpose();
          A *= sc;
          tile_softmax(A, m, t);
          O.middleRows(t.row_begin, t.row_count).noalias() = A * V.topRows(t.prefix);
        }
      } else {
        MatMap A(wd + g * ctx->per_group, sq, sk);
        A.noalias() = Q * K.transpose();
        A *= sc;
        for (Eigen::Index i = 0; i < sq; ++i)
          for (Eigen::Index j = 0; j < sk; ++j)
            if (!m.at(i, j)) A(i, j) = kNegInf;
        softmax_rows_inplace(A);
        O.noalias() = A * V;
      }
    }
  }

  if (attn_capture) {
    Tensor cap = Tensor::zeros({groups, sq, sk});
    Scalar* cd = cap.data();
    const Scalar* wd = ctx->weights.data();
    for (Eigen::Index g = 0; g < groups; ++g) {
      MatMap C(cd + g * sq * sk, sq, sk);
      if (prefix) {
        for (size_t ti = 0; ti < mask->tiles.size(); ++ti) {
          const auto& t = mask->tiles[ti];
          C.block(t.row_begin, 0, t.row_count, t.prefix) =
              ConstMatMap(wd + g * ctx->per_group + ctx->offset[ti], t.row_count, t.prefix);
        }
      } else {
        C = ConstMatMap(wd + g * ctx->per_group, sq, sk);
      }
    }
    *attn_capture = cap;
  }

  if (track) {
    MaskPtr mp = mask;
    out.node()->backward_fn = [ctx, mp, groups, sq, sk, dh, sc, prefix](TensorNode& n) {
      Tensor &pq = n.parents[0], &pk = n.parents[1], &pv = n.parents[2];
      Scalar* gq = pq.requires_grad() ? pq.grad_ref().data() : nullptr;
      Scalar* gk = pk.requires_grad() ? pk.grad_ref().data() : nullptr;
      Scalar* gv = pv.requires_grad() ? pv.grad_ref().data() : nullptr;
      const Scalar *qd = pq.data(), *kd = pk.data(), *vd = pv.data(), *gd = n.grad.data();
      const Scalar* wd = ctx->weights.data();
      const AttnMask& m = *mp;
#pragma omp parallel for schedule(static)
      for (Eigen::Index g = 0; g < groups; ++g) {
        ConstMatMap Q(qd + g * sq * dh, sq, dh);
        ConstMatMap K(kd + g * sk * dh, sk, dh);
        ConstMatMap V(vd + g * sk * dh, sk, dh);
        ConstMatMap GO(gd + g * sq * dh, sq, dh);
        auto run_tile = [&](ConstMatMap A, Eigen::Index r0, Eigen::Index rc, Eigen::Index p) {
          MatRM dA(rc, p);
          dA.noalias() = GO.middleRows(r0, rc) * V.topRows(p).transpose();
          if (gv)
            MatMap(gv + g * sk * dh, sk, dh).topRows(p).noalias() +=
                A.transpose() * GO.middleRows(r0, rc);
          for (Eigen::Index r = 0; r < rc; ++r) {
            Scalar dot = (dA.row(r).array() * A.row(r).array()).sum();
            dA.row(r).array() = A.row(r).array() * (dA.row(r).array() - dot) * sc;
          }
          if (gq)
            MatMap(gq + g * sq * dh, sq, dh).middleRows(r0, rc).noalias() += dA * K.topRows(p);
          if (gk)
            MatMap(gk + g * sk * dh, sk, dh).topRows(p).noalias() +=
                dA.transpose() * Q.middleRows(r0, rc);
        };
        if (prefix) {
          for (size_t ti = 0; ti < m.tiles.size(); ++ti) {
            const auto& t = m.tiles[ti];
            run_tile(ConstMatMap(wd + g * ctx->per_group + ctx->offset[ti], t.row_count, t.prefix),
                     t.row_begin, t.row_count, t.prefix);
          }
        } else {
          run_tile(ConstMatMap(wd + g * ctx->per_group, sq, sk), 0, sq, sk);
        }
      }
    };
    out.node()->drop_ctx = [ctx] { ctx->weights.resize(0); };
  }
  return out;
}

Tensor sum(const Tensor& a) {
  bool track = want_grad({&a});
  Tensor out = raw_out({1}, track, {a});
  double s = 0;
  const Scalar* d = a.data();
  for (Eigen::Index i = 0, n = a.numel(); i < n; ++i) s += d[i];
  out.values()[0] = Scalar(checked_scalar("sum", s));
  if (track)
    out.node()->backward_fn = [](TensorNode& n) {
      if (n.parents[0].requires_grad()) n.parents[0].grad_ref() += n.grad[0];
    };
  return out;
}

Tensor mean(const Tensor& a) {
  bool track = want_grad({&a});
  Tensor out = raw_out({1}, track, {a});
  double s = 0;
  const Scalar* d = a.data();
  Eigen::Index n_el = a.numel();
  for (Eigen::Index i = 0; i < n_el; ++i) s += d[i];
  out.values()[0] = Scalar(checked_scalar("mean", s / double(n_el)));
  if (track)
    out.node()->backward_fn = [n_el](TensorNode& n) {
      if (n.parents[0].requires_grad()) n.parents[0].grad_ref() += n.grad[0] / Scalar(n_el);
    };
  return out;
}

Tensor mse(const Tensor& a, const Tensor& b) {
  check_same_shape("mse", a, b);
  bool track = want_grad({&a, &b});
  Tensor out = raw_out({1}, track, {a, b});
  double s = 0;
  const Scalar *ad = a.data(), *bd = b.data();
  Eigen::Index n_el = a.numel();
  for (Eigen::Index i = 0; i < n_el; ++i) {
    double d = double(ad[i]) - double(bd[i]);
    s += d * d;
  }
  out.values()[0] = Scalar(checked_scalar("mse", s / double(n_el)));
  if (track)
    out.node()->backward_fn = [n_el](TensorNode& n) {
      Tensor &pa = n.parents[0], &pb = n.parents[1];
      Scalar c = n.grad[0] * 2.0f / Scalar(n_el);
      if (pa.requires_grad()) pa.grad_ref() += c * (pa.values() - pb.values());
      if (pb.requires_grad()) pb.grad_ref() -= c * (pa.values() - pb.values());
    };
  return out;
}

Tensor sum_squares_scaled(const Tensor& a, Scalar factor) {
  bool track = want_grad({&a});
  Tensor out = raw_out({1}, track, {a});
  double s = 0;
  const Scalar* d = a.data();
  for (Eigen::Index i = 0, n = a.numel(); i < n; ++i) s += double(d[i]) * double(d[i]);
  out.values()[0] = Scalar(checked_scalar("sum_squares_scaled", s * double(factor)));
  if (track)
    out.node()->backward_fn = [factor](TensorNode& n) {
      if (n.parents[0].requires_grad())
        n.parents[0].grad_ref() += n.grad[0] * 2.0f * factor * n.parents[0].values();
    };
  return out;
}

Tensor detach(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  out.values() = a.values();
  return out;
}

}  // namespace jepa
