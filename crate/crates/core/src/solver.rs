//! Small dense SQP minimizer for smooth problems in one to four variables
//! with box bounds and `g(x) >= 0` inequality constraints.
//!
//! Variables are mapped to the unit box before anything is differentiated.
//! Each local run uses central-difference gradients, a damped BFGS Hessian
//! and an exact active-set QP (all active sets are enumerated, which is cheap
//! at this size). An L1 merit function with backtracking globalizes the
//! step. A fixed multi-start over the box guards against the kinks of the
//! plant model. The whole procedure is deterministic.

use thiserror::Error;

use crate::scalar::Scalar;

pub const MAX_DIMENSION: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("problem dimension must be between 1 and {MAX_DIMENSION}, got {0}")]
    Dimension(usize),
    #[error("bounds have mismatched lengths")]
    BoundsLength,
    #[error("lower bound exceeds upper bound in dimension {0}")]
    BoundsOrder(usize),
    #[error("initial point lies outside the bounds in dimension {0}")]
    InitialOutOfBounds(usize),
    #[error("objective is not finite at the initial point")]
    NonFiniteObjective,
}

type ScalarFn<'a, T> = Box<dyn Fn(&[T]) -> T + Send + Sync + 'a>;

/// A box-bounded minimization problem.
pub struct BoxedProblem<'a, T> {
    objective: ScalarFn<'a, T>,
    constraints: Vec<ScalarFn<'a, T>>,
    lower: Vec<T>,
    upper: Vec<T>,
    initial: Vec<T>,
    extra_starts: Vec<Vec<T>>,
}

impl<'a, T: Scalar> BoxedProblem<'a, T> {
    /// Creates a problem whose initial point is the box midpoint.
    pub fn new(
        lower: Vec<T>,
        upper: Vec<T>,
        objective: impl Fn(&[T]) -> T + Send + Sync + 'a,
    ) -> Result<Self, SolverError> {
        let dim = lower.len();
        if dim == 0 || dim > MAX_DIMENSION {
            return Err(SolverError::Dimension(dim));
        }
        if upper.len() != dim {
            return Err(SolverError::BoundsLength);
        }
        for i in 0..dim {
            if !(lower[i] <= upper[i]) {
                return Err(SolverError::BoundsOrder(i));
            }
        }
        let two = T::lit(2.0);
        let initial = lower.iter().zip(&upper).map(|(&l, &u)| (l + u) / two).collect();
        Ok(Self { objective: Box::new(objective), constraints: Vec::new(), lower, upper, initial, extra_starts: Vec::new() })
    }

    /// Adds a constraint that must be non-negative at the solution.
    pub fn with_constraint(mut self, g: impl Fn(&[T]) -> T + Send + Sync + 'a) -> Self {
        self.constraints.push(Box::new(g));
        self
    }

    pub fn with_initial(mut self, initial: Vec<T>) -> Result<Self, SolverError> {
        self.check_inside(&initial)?;
        self.initial = initial;
        Ok(self)
    }

    /// Adds a caller-chosen start to the multi-start set.
    pub fn with_start(mut self, start: Vec<T>) -> Result<Self, SolverError> {
        self.check_inside(&start)?;
        self.extra_starts.push(start);
        Ok(self)
    }

    fn check_inside(&self, x: &[T]) -> Result<(), SolverError> {
        if x.len() != self.dimension() {
            return Err(SolverError::BoundsLength);
        }
        for (i, &v) in x.iter().enumerate() {
            if !(v >= self.lower[i] && v <= self.upper[i]) {
                return Err(SolverError::InitialOutOfBounds(i));
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn objective(&self, x: &[T]) -> T {
        (self.objective)(x)
    }

    /// Largest violation of the inequality constraints at `x`, natural units.
    pub fn max_violation(&self, x: &[T]) -> T {
        self.constraints
            .iter()
            .map(|g| {
                let v = g(x);
                if v.is_nan() {
                    T::infinity()
                } else {
                    (-v).max(T::zero())
                }
            })
            .fold(T::zero(), |acc, v| acc.max(v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult<T> {
    pub point: Vec<T>,
    pub objective_value: T,
    /// True when the returned point satisfies every constraint within the
    /// feasibility tolerance.
    pub converged: bool,
    /// Total SQP iterations over all starts.
    pub iterations: usize,
    pub max_constraint_violation: T,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions<T> {
    /// Step-size tolerance in unit-box coordinates.
    pub tolerance: T,
    pub max_iterations: usize,
    /// Allowed constraint violation, natural units.
    pub feasibility_tolerance: T,
    /// Finite-difference step in unit-box coordinates.
    pub fd_step: T,
    pub multistart: bool,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tolerance: T::lit(1e-8),
            max_iterations: 200,
            feasibility_tolerance: T::lit(1e-6),
            fd_step: T::lit(1e-5),
            multistart: true,
        }
    }
}

/// Minimizes with the default options and the given step tolerance and
/// per-start iteration cap.
pub fn minimize<T: Scalar>(
    problem: &BoxedProblem<'_, T>,
    tolerance: T,
    max_iterations: usize,
) -> Result<SolveResult<T>, SolverError> {
    let options = SolverOptions { tolerance, max_iterations, ..SolverOptions::default() };
    minimize_with(problem, &options)
}

pub fn minimize_with<T: Scalar>(
    problem: &BoxedProblem<'_, T>,
    options: &SolverOptions<T>,
) -> Result<SolveResult<T>, SolverError> {
    let f0 = problem.objective(&problem.initial);
    if !f0.is_finite() {
        return Err(SolverError::NonFiniteObjective);
    }
    let scaled = ScaledProblem::new(problem, options, f0);
    let starts = scaled.starts(options.multistart);

    let mut best: Option<LocalRun<T>> = None;
    let mut iterations = 0;
    for z0 in starts {
        let run = scaled.local_sqp(&z0);
        iterations += run.iterations;
        let replace = match &best {
            None => true,
            Some(b) => run.better_than(b, options.feasibility_tolerance),
        };
        if replace {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    let point = scaled.to_natural(&best.z);
    let objective_value = problem.objective(&point);
    let max_constraint_violation = problem.max_violation(&point);
    Ok(SolveResult {
        converged: objective_value.is_finite() && max_constraint_violation <= options.feasibility_tolerance,
        point,
        objective_value,
        iterations,
        max_constraint_violation,
    })
}

struct LocalRun<T> {
    z: Vec<T>,
    f: T,
    violation: T,
    iterations: usize,
}

impl<T: Scalar> LocalRun<T> {
    fn better_than(&self, other: &Self, feas_tol: T) -> bool {
        let self_ok = self.f.is_finite() && self.violation <= feas_tol;
        let other_ok = other.f.is_finite() && other.violation <= feas_tol;
        match (self_ok, other_ok) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => self.f < other.f,
            (false, false) => self.violation < other.violation,
        }
    }
}

struct ScaledProblem<'p, 'a, T> {
    problem: &'p BoxedProblem<'a, T>,
    options: &'p SolverOptions<T>,
    width: Vec<T>,
    /// Objective scale so that merit and QP work on O(1) numbers.
    f_scale: T,
}

impl<'p, 'a, T: Scalar> ScaledProblem<'p, 'a, T> {
    fn new(problem: &'p BoxedProblem<'a, T>, options: &'p SolverOptions<T>, f0: T) -> Self {
        let width = problem.lower.iter().zip(&problem.upper).map(|(&l, &u)| u - l).collect();
        let f_scale = T::one() / f0.abs().max(T::one());
        Self { problem, options, width, f_scale }
    }

    fn dim(&self) -> usize {
        self.width.len()
    }

    fn upper_z(&self, i: usize) -> T {
        if self.width[i] > T::zero() {
            T::one()
        } else {
            T::zero()
        }
    }

    fn to_natural(&self, z: &[T]) -> Vec<T> {
        z.iter()
            .enumerate()
            .map(|(i, &zi)| {
                let x = self.problem.lower[i] + zi * self.width[i];
                x.max(self.problem.lower[i]).min(self.problem.upper[i])
            })
            .collect()
    }

    fn to_unit(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .enumerate()
            .map(|(i, &xi)| {
                if self.width[i] > T::zero() {
                    ((xi - self.problem.lower[i]) / self.width[i]).max(T::zero()).min(T::one())
                } else {
                    T::zero()
                }
            })
            .collect()
    }

    fn clamp(&self, z: &mut [T]) {
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = zi.max(T::zero()).min(self.upper_z(i));
        }
    }

    /// Initial point, caller starts, box centre and the inset corners of the
    /// unit box.
    fn starts(&self, multistart: bool) -> Vec<Vec<T>> {
        let d = self.dim();
        let mut starts = vec![self.to_unit(&self.problem.initial)];
        starts.extend(self.problem.extra_starts.iter().map(|x| self.to_unit(x)));
        if multistart {
            let half = T::lit(0.5);
            let mut centre = vec![half; d];
            self.clamp(&mut centre);
            starts.push(centre);
            for mask in 0..(1usize << d) {
                let mut z: Vec<T> =
                    (0..d).map(|i| if mask >> i & 1 == 1 { T::lit(0.8) } else { T::lit(0.2) }).collect();
                self.clamp(&mut z);
                starts.push(z);
            }
        }
        let mut unique: Vec<Vec<T>> = Vec::with_capacity(starts.len());
        for s in starts {
            let dup = unique
                .iter()
                .any(|u| u.iter().zip(&s).all(|(&a, &b)| (a - b).abs() <= T::lit(1e-12)));
            if !dup {
                unique.push(s);
            }
        }
        unique
    }

    fn f(&self, z: &[T]) -> T {
        let v = self.problem.objective(&self.to_natural(z)) * self.f_scale;
        if v.is_nan() {
            T::infinity()
        } else {
            v
        }
    }

    fn constraints(&self, z: &[T]) -> Vec<T> {
        let x = self.to_natural(z);
        self.problem
            .constraints
            .iter()
            .map(|g| {
                let v = g(&x);
                if v.is_nan() {
                    T::neg_infinity()
                } else {
                    v
                }
            })
            .collect()
    }

    fn violation(c: &[T]) -> T {
        c.iter().fold(T::zero(), |acc, &v| acc.max(-v))
    }

    fn l1_violation(c: &[T]) -> T {
        c.iter().fold(T::zero(), |acc, &v| acc + (-v).max(T::zero()))
    }

    /// Finite-difference derivative of `h` at `z` along coordinate `i`,
    /// one-sided at the box faces.
    fn partial(&self, z: &[T], i: usize, h_at: &dyn Fn(&[T]) -> Vec<T>, base: &[T]) -> Vec<T> {
        let n_out = base.len();
        if self.width[i] == T::zero() {
            return vec![T::zero(); n_out];
        }
        let h = self.options.fd_step;
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        let (plus_ok, minus_ok) = (z[i] + h <= T::one(), z[i] - h >= T::zero());
        let (step_p, step_m) = match (plus_ok, minus_ok) {
            (true, true) => (h, h),
            (true, false) => (h, T::zero()),
            (false, true) => (T::zero(), h),
            (false, false) => (h, h),
        };
        zp[i] += step_p;
        zm[i] -= step_m;
        let fp = if step_p > T::zero() { h_at(&zp) } else { base.to_vec() };
        let fm = if step_m > T::zero() { h_at(&zm) } else { base.to_vec() };
        let denom = step_p + step_m;
        (0..n_out).map(|k| (fp[k] - fm[k]) / denom).collect()
    }

    fn gradient(&self, z: &[T], fz: T) -> Vec<T> {
        let eval = |zz: &[T]| vec![self.f(zz)];
        (0..self.dim()).map(|i| self.partial(z, i, &eval, &[fz])[0]).collect()
    }

    /// Jacobian rows, one per constraint.
    fn jacobian(&self, z: &[T], cz: &[T]) -> Vec<Vec<T>> {
        let m = cz.len();
        let mut rows = vec![vec![T::zero(); self.dim()]; m];
        if m == 0 {
            return rows;
        }
        let eval = |zz: &[T]| self.constraints(zz);
        for i in 0..self.dim() {
            let col = self.partial(z, i, &eval, cz);
            for (j, row) in rows.iter_mut().enumerate() {
                row[i] = if col[j].is_finite() { col[j] } else { T::zero() };
            }
        }
        rows
    }

    fn local_sqp(&self, z0: &[T]) -> LocalRun<T> {
        let d = self.dim();
        let tol = self.options.tolerance;
        let feas_tol = self.options.feasibility_tolerance;
        let mut z = z0.to_vec();
        self.clamp(&mut z);
        let mut fz = self.f(&z);
        let mut cz = self.constraints(&z);
        if !fz.is_finite() {
            return LocalRun { violation: Self::violation(&cz), z, f: T::infinity(), iterations: 0 };
        }
        let mut grad = self.gradient(&z, fz);
        let mut jac = self.jacobian(&z, &cz);
        let mut hess = identity::<T>(d);
        let mut penalty = T::one();
        let mut iterations = 0;
        let mut reset_once = false;

        while iterations < self.options.max_iterations {
            iterations += 1;
            let qp = solve_step_qp(&hess, &grad, &cz, &jac, &z, |i| self.upper_z(i));
            let p = qp.step;
            let p_norm = p.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()));
            let viol = Self::violation(&cz);
            if p_norm <= tol && viol <= feas_tol {
                break;
            }
            if p_norm <= tol {
                // The linearization offers no progress; descend on the
                // violation alone.
                match self.restoration_step(&z, &cz, &jac) {
                    Some((z_new, f_new, c_new)) => {
                        grad = self.gradient(&z_new, f_new);
                        jac = self.jacobian(&z_new, &c_new);
                        z = z_new;
                        fz = f_new;
                        cz = c_new;
                        hess = identity(d);
                        continue;
                    }
                    None => break,
                }
            }

            let lam_max = qp.multipliers.iter().fold(T::zero(), |acc, &l| acc.max(l));
            if penalty < T::lit(1.5) * lam_max {
                penalty = T::lit(2.0) * lam_max;
            }
            let merit = |f: T, c: &[T]| f + penalty * Self::l1_violation(c);
            let phi0 = merit(fz, &cz);
            let descent = dot(&grad, &p) - penalty * Self::l1_violation(&cz);
            let slope = if descent < T::zero() { descent } else { -T::lit(1e-12) };

            let mut alpha = T::one();
            let mut accepted = None;
            for _ in 0..40 {
                let mut trial: Vec<T> = z.iter().zip(&p).map(|(&zi, &pi)| zi + alpha * pi).collect();
                self.clamp(&mut trial);
                let ft = self.f(&trial);
                if ft.is_finite() {
                    let ct = self.constraints(&trial);
                    if merit(ft, &ct) <= phi0 + T::lit(1e-4) * alpha * slope {
                        accepted = Some((trial, ft, ct));
                        break;
                    }
                }
                alpha *= T::lit(0.5);
            }

            let Some((z_new, f_new, c_new)) = accepted else {
                if reset_once || p_norm <= tol {
                    break;
                }
                // Stale curvature; retry once from the identity.
                hess = identity(d);
                reset_once = true;
                continue;
            };

            let grad_new = self.gradient(&z_new, f_new);
            let jac_new = self.jacobian(&z_new, &c_new);
            let s: Vec<T> = z_new.iter().zip(&z).map(|(&a, &b)| a - b).collect();
            let lag_old = lagrangian_gradient(&grad, &jac, &qp.multipliers);
            let lag_new = lagrangian_gradient(&grad_new, &jac_new, &qp.multipliers);
            let y: Vec<T> = lag_new.iter().zip(&lag_old).map(|(&a, &b)| a - b).collect();
            damped_bfgs(&mut hess, &s, &y);

            let s_norm = s.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()));
            z = z_new;
            fz = f_new;
            cz = c_new;
            grad = grad_new;
            jac = jac_new;
            if s_norm <= tol && Self::violation(&cz) <= feas_tol {
                break;
            }
        }
        LocalRun { violation: Self::violation(&cz).max(T::zero()), z, f: fz, iterations }
    }
}

impl<'p, 'a, T: Scalar> ScaledProblem<'p, 'a, T> {
    /// Projected-gradient step on the L1 constraint violation.
    fn restoration_step(&self, z: &[T], cz: &[T], jac: &[Vec<T>]) -> Option<(Vec<T>, T, Vec<T>)> {
        let d = self.dim();
        let mut dir = vec![T::zero(); d];
        for (row, &c) in jac.iter().zip(cz) {
            if c < T::zero() {
                for (o, &a) in dir.iter_mut().zip(row) {
                    *o += a;
                }
            }
        }
        let mut target = z.iter().zip(&dir).map(|(&zi, &gi)| zi + gi).collect::<Vec<_>>();
        self.clamp(&mut target);
        let p: Vec<T> = target.iter().zip(z).map(|(&a, &b)| a - b).collect();
        if p.iter().all(|v| v.abs() <= self.options.tolerance) {
            return None;
        }
        let v0 = Self::l1_violation(cz);
        let mut alpha = T::one();
        for _ in 0..40 {
            let mut trial: Vec<T> = z.iter().zip(&p).map(|(&zi, &pi)| zi + alpha * pi).collect();
            self.clamp(&mut trial);
            let ct = self.constraints(&trial);
            let ft = self.f(&trial);
            if ft.is_finite() && Self::l1_violation(&ct) < v0 {
                return Some((trial, ft, ct));
            }
            alpha *= T::lit(0.5);
        }
        None
    }
}

fn identity<T: Scalar>(d: usize) -> Vec<Vec<T>> {
    (0..d).map(|i| (0..d).map(|j| if i == j { T::one() } else { T::zero() }).collect()).collect()
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn lagrangian_gradient<T: Scalar>(grad: &[T], jac: &[Vec<T>], multipliers: &[T]) -> Vec<T> {
    let mut out = grad.to_vec();
    for (row, &lam) in jac.iter().zip(multipliers) {
        for (o, &a) in out.iter_mut().zip(row) {
            *o -= lam * a;
        }
    }
    out
}

/// Powell-damped BFGS update; keeps the matrix positive definite.
fn damped_bfgs<T: Scalar>(h: &mut [Vec<T>], s: &[T], y: &[T]) {
    let d = s.len();
    let hs: Vec<T> = (0..d).map(|i| dot(&h[i], s)).collect();
    let shs = dot(s, &hs);
    if !(shs > T::lit(1e-300)) {
        return;
    }
    let sy = dot(s, y);
    let theta = if sy >= T::lit(0.2) * shs {
        T::one()
    } else {
        T::lit(0.8) * shs / (shs - sy)
    };
    let r: Vec<T> = (0..d).map(|i| theta * y[i] + (T::one() - theta) * hs[i]).collect();
    let sr = dot(s, &r);
    if !(sr > T::zero()) || !sr.is_finite() {
        return;
    }
    for i in 0..d {
        for j in 0..d {
            h[i][j] = h[i][j] - hs[i] * hs[j] / shs + r[i] * r[j] / sr;
        }
    }
}

struct QpStep<T> {
    step: Vec<T>,
    /// Multipliers of the nonlinear constraints (bounds excluded).
    multipliers: Vec<T>,
}

/// One linear inequality `a . p >= b` of the step subproblem.
struct Row<T> {
    a: Vec<T>,
    b: T,
}

/// Solves `min 1/2 p'Hp + g'p` subject to the linearized constraints and the
/// unit-box limits on `z + p`. Linearizations that cannot be met inside the
/// box are progressively relaxed; with full relaxation `p = 0` is feasible.
fn solve_step_qp<T: Scalar>(
    h: &[Vec<T>],
    g: &[T],
    c: &[T],
    jac: &[Vec<T>],
    z: &[T],
    upper_z: impl Fn(usize) -> T,
) -> QpStep<T> {
    let d = g.len();
    let m = c.len();
    for tau in [1.0, 0.5, 0.25, 0.1, 0.0] {
        let tau = T::lit(tau);
        let mut rows: Vec<Row<T>> = Vec::with_capacity(m + 2 * d);
        for j in 0..m {
            let cj = if c[j].is_finite() { c[j] } else { -T::lit(1e6) };
            let b = if cj < T::zero() { -tau * cj } else { -cj };
            rows.push(Row { a: jac[j].clone(), b });
        }
        for i in 0..d {
            let mut e = vec![T::zero(); d];
            e[i] = T::one();
            rows.push(Row { a: e.clone(), b: -z[i] });
            e[i] = -T::one();
            rows.push(Row { a: e, b: -(upper_z(i) - z[i]) });
        }
        if let Some((step, lambda)) = active_set_enumeration(h, g, &rows) {
            let multipliers = lambda[..m].to_vec();
            return QpStep { step, multipliers };
        }
    }
    QpStep { step: vec![T::zero(); d], multipliers: vec![T::zero(); m] }
}

/// Exact solution of a tiny strictly convex QP by trying every active set of
/// at most `d` rows. Returns the step and one multiplier per row.
fn active_set_enumeration<T: Scalar>(h: &[Vec<T>], g: &[T], rows: &[Row<T>]) -> Option<(Vec<T>, Vec<T>)> {
    let d = g.len();
    let n_rows = rows.len();
    let feas_tol = |b: T| T::lit(1e-10) * (T::one() + b.abs());
    let mut fallback: Option<(T, Vec<T>, Vec<T>)> = None;

    let mut found = None;
    for size in 0..=d.min(n_rows) {
        for_each_combination(n_rows, size, &mut |active: &[usize]| {
            let k = active.len();
            let n = d + k;
            let mut mat = vec![T::zero(); n * n];
            let mut rhs = vec![T::zero(); n];
            for i in 0..d {
                for j in 0..d {
                    mat[i * n + j] = h[i][j];
                }
                rhs[i] = -g[i];
            }
            for (r, &idx) in active.iter().enumerate() {
                for j in 0..d {
                    mat[j * n + d + r] = -rows[idx].a[j];
                    mat[(d + r) * n + j] = rows[idx].a[j];
                }
                rhs[d + r] = rows[idx].b;
            }
            let Some(sol) = solve_dense(&mut mat, &mut rhs, n) else {
                return false;
            };
            let p = &sol[..d];
            let primal_ok = rows.iter().all(|row| dot(&row.a, p) >= row.b - feas_tol(row.b));
            if !primal_ok {
                return false;
            }
            let dual_ok = sol[d..].iter().all(|&l| l >= -T::lit(1e-12));
            if dual_ok {
                let mut lambda = vec![T::zero(); n_rows];
                for (r, &idx) in active.iter().enumerate() {
                    lambda[idx] = sol[d + r].max(T::zero());
                }
                found = Some((p.to_vec(), lambda));
                return true;
            }
            let hp: Vec<T> = (0..d).map(|i| dot(&h[i], p)).collect();
            let obj = T::lit(0.5) * dot(p, &hp) + dot(g, p);
            if fallback.as_ref().is_none_or(|(best, _, _)| obj < *best) {
                fallback = Some((obj, p.to_vec(), vec![T::zero(); n_rows]));
            }
            false
        });
        if found.is_some() {
            return found;
        }
    }
    fallback.map(|(_, p, l)| (p, l))
}

/// Calls `visit` with every `k`-subset of `0..n` in lexicographic order until
/// it returns true.
fn for_each_combination(n: usize, k: usize, visit: &mut dyn FnMut(&[usize]) -> bool) -> bool {
    if k > n {
        return false;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if visit(&idx) {
            return true;
        }
        let mut i = k;
        loop {
            if i == 0 {
                return false;
            }
            i -= 1;
            if idx[i] < i + n - k {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Gaussian elimination with partial pivoting on a row-major `n x n` system.
fn solve_dense<T: Scalar>(a: &mut [T], b: &mut [T], n: usize) -> Option<Vec<T>> {
    let scale = a.iter().fold(T::zero(), |acc, &v| acc.max(v.abs())).max(T::min_positive_value());
    for col in 0..n {
        let pivot = (col..n).max_by(|&r1, &r2| {
            a[r1 * n + col].abs().partial_cmp(&a[r2 * n + col].abs()).unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot * n + col].abs() <= T::lit(1e-13) * scale {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        for r in col + 1..n {
            let factor = a[r * n + col] / a[col * n + col];
            if factor != T::zero() {
                for j in col..n {
                    a[r * n + j] -= factor * a[col * n + j];
                }
                b[r] -= factor * b[col];
            }
        }
    }
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for j in r + 1..n {
            acc -= a[r * n + j] * x[j];
        }
        x[r] = acc / a[r * n + r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    #[test]
    fn unconstrained_quadratic() {
        let p = BoxedProblem::new(vec![0.0], vec![10.0], |x: &[f64]| (x[0] - 3.0).powi(2)).unwrap();
        let r = minimize(&p, 1e-8, 200).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.point[0], 3.0, epsilon = 1e-5);
        assert_abs_diff_eq!(r.objective_value, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn active_constraint() {
        let p = BoxedProblem::new(vec![0.0], vec![10.0], |x: &[f64]| x[0] * x[0])
            .unwrap()
            .with_constraint(|x: &[f64]| x[0] - 2.0);
        let r = minimize(&p, 1e-8, 200).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.point[0], 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.objective_value, 4.0, epsilon = 1e-5);
        assert!(r.max_constraint_violation <= 1e-6);
    }

    #[test]
    fn bound_active_in_two_dimensions() {
        // minimum of the unconstrained bowl is outside the box at (-1, 5)
        let p = BoxedProblem::new(vec![0.0, 0.0], vec![4.0, 4.0], |x: &[f64]| {
            (x[0] + 1.0).powi(2) + (x[1] - 5.0).powi(2)
        })
        .unwrap();
        let r = minimize(&p, 1e-8, 200).unwrap();
        assert_abs_diff_eq!(r.point[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.point[1], 4.0, epsilon = 1e-9);
    }

    #[test]
    fn curved_constraint_in_two_dimensions() {
        // min x + y on the box subject to x * y >= 4: optimum (2, 2)
        let p = BoxedProblem::new(vec![0.5, 0.5], vec![10.0, 10.0], |x: &[f64]| x[0] + x[1])
            .unwrap()
            .with_constraint(|x: &[f64]| x[0] * x[1] - 4.0);
        let r = minimize(&p, 1e-10, 200).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.point[0], 2.0, epsilon = 1e-4);
        assert_abs_diff_eq!(r.point[1], 2.0, epsilon = 1e-4);
    }

    #[test]
    fn infeasible_reports_not_converged() {
        let p = BoxedProblem::new(vec![0.0], vec![1.0], |x: &[f64]| x[0])
            .unwrap()
            .with_constraint(|x: &[f64]| x[0] - 2.0);
        let r = minimize(&p, 1e-8, 200).unwrap();
        assert!(!r.converged);
        assert_abs_diff_eq!(r.point[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.max_constraint_violation, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn input_validation() {
        assert_eq!(
            BoxedProblem::new(Vec::<f64>::new(), vec![], |_: &[f64]| 0.0).err(),
            Some(SolverError::Dimension(0))
        );
        assert_eq!(
            BoxedProblem::new(vec![1.0], vec![0.0], |_: &[f64]| 0.0).err(),
            Some(SolverError::BoundsOrder(0))
        );
        let p = BoxedProblem::new(vec![0.0], vec![1.0], |_: &[f64]| 0.0).unwrap();
        assert_eq!(p.with_initial(vec![2.0]).err(), Some(SolverError::InitialOutOfBounds(0)));
        let p = BoxedProblem::new(vec![0.0], vec![1.0], |_: &[f64]| f64::NAN).unwrap();
        assert_eq!(minimize(&p, 1e-8, 10).err(), Some(SolverError::NonFiniteObjective));
    }

    #[test]
    fn fixed_dimension_is_respected() {
        let p = BoxedProblem::new(vec![1.0, 0.0], vec![1.0, 3.0], |x: &[f64]| (x[0] - 2.0).powi(2) + (x[1] - 1.0).powi(2))
            .unwrap();
        let r = minimize(&p, 1e-8, 200).unwrap();
        assert_eq!(r.point[0], 1.0);
        assert_abs_diff_eq!(r.point[1], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn deterministic() {
        let build = || {
            BoxedProblem::new(vec![0.0, -2.0], vec![3.0, 2.0], |x: &[f64]| {
                (x[0] - 1.3).powi(4) + (x[0] * x[1] - 0.7).powi(2)
            })
            .unwrap()
            .with_constraint(|x: &[f64]| 2.0 - x[0] - x[1] * x[1])
        };
        let a = minimize(&build(), 1e-8, 200).unwrap();
        let b = minimize(&build(), 1e-8, 200).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn f32_instantiation() {
        let p = BoxedProblem::new(vec![0.0f32], vec![10.0], |x: &[f32]| (x[0] - 3.0) * (x[0] - 3.0)).unwrap();
        let opts = SolverOptions { tolerance: 1e-5f32, fd_step: 1e-3, ..SolverOptions::default() };
        let r = minimize_with(&p, &opts).unwrap();
        assert!((r.point[0] - 3.0).abs() < 1e-2);
    }

    #[test]
    fn combinations_enumerate_all_subsets() {
        let mut seen = Vec::new();
        for_each_combination(4, 2, &mut |c| {
            seen.push(c.to_vec());
            false
        });
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        let mut count = 0;
        for_each_combination(3, 0, &mut |_| {
            count += 1;
            false
        });
        assert_eq!(count, 1);
    }
}
