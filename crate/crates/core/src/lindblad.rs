//! Master-equation oracle for an NV spin coupled to one dark electron spin,
//! optionally driven by a classical AC field on the NV. Pulses are
//! instantaneous rotations; free evolution uses the exact superoperator
//! exponential when the generator is time independent and RK4 otherwise.

use crate::error::{Error, Result};
use crate::kernels::{self, KernelParams, NvRelaxation};
use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, SymmetricEigen};
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

pub type Op = Matrix4<C>;

fn c(re: f64) -> C {
    C::new(re, 0.0)
}

fn pauli(which: char) -> Matrix2<C> {
    let (o, l, i) = (c(0.0), c(1.0), C::i());
    match which {
        'x' => Matrix2::new(o, l, l, o),
        'y' => Matrix2::new(o, -i, i, o),
        'z' => Matrix2::new(l, o, o, -l),
        '+' => Matrix2::new(o, l, o, o),
        '-' => Matrix2::new(o, o, l, o),
        _ => Matrix2::identity(),
    }
}

fn kron2(a: &Matrix2<C>, b: &Matrix2<C>) -> Op {
    let mut m = Op::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    m[(2 * i + k, 2 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    m
}

/// Which spin a pulse or operator acts on. The register is NV ⊗ electron.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spin {
    Nv,
    Electron,
}

/// Single-spin operator embedded in the two-spin register.
pub fn spin_op(spin: Spin, which: char) -> Op {
    let p = pauli(which);
    let id = Matrix2::identity();
    match spin {
        Spin::Nv => kron2(&p, &id),
        Spin::Electron => kron2(&id, &p),
    }
}

/// Rotation axis in the transverse plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    MinusX,
    MinusY,
}

impl Axis {
    fn operator(self, spin: Spin) -> Op {
        match self {
            Axis::X => spin_op(spin, 'x'),
            Axis::Y => spin_op(spin, 'y'),
            Axis::MinusX => -spin_op(spin, 'x'),
            Axis::MinusY => -spin_op(spin, 'y'),
        }
    }
}

/// Classical AC field on the NV: H' = (B/2) sin(ωt + χ) σ_z^(v), t measured
/// from the start of the sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcDrive {
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
}

impl AcDrive {
    pub fn new(amplitude: f64, omega: f64, phase: f64) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude >= 0.0 && omega.is_finite() && phase.is_finite()) {
            return Err(Error::InvalidInput("drive amplitude must be >= 0 and all fields finite".into()));
        }
        Ok(Self { amplitude, omega, phase })
    }

    pub fn off() -> Self {
        Self { amplitude: 0.0, omega: 0.0, phase: 0.0 }
    }

    fn active(&self) -> bool {
        self.amplitude > 0.0
    }
}

/// Relaxation channels of both spins (rad/µs).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Rates {
    pub gamma_v1: f64,
    pub gamma_v2: f64,
    pub gamma_e1: f64,
    pub gamma_e2: f64,
}

impl Rates {
    pub fn from_kernel(p: &KernelParams, nv: &NvRelaxation) -> Self {
        Self { gamma_v1: nv.gamma_v1, gamma_v2: nv.gamma_v2, gamma_e1: p.gamma_e1, gamma_e2: p.gamma_e2 }
    }

    /// (rate, jump operator) pairs for Σ rate·𝒟[A].
    pub fn dissipators(&self) -> Vec<(f64, Op)> {
        let mut out = Vec::new();
        for (spin, g1, g2) in [(Spin::Nv, self.gamma_v1, self.gamma_v2), (Spin::Electron, self.gamma_e1, self.gamma_e2)] {
            if g1 > 0.0 {
                out.push((g1 / 2.0, spin_op(spin, '+')));
                out.push((g1 / 2.0, spin_op(spin, '-')));
            }
            if g2 > 0.0 {
                out.push((g2 / 2.0, spin_op(spin, 'z')));
            }
        }
        out
    }

    fn max_rate(&self) -> f64 {
        self.gamma_v1.max(self.gamma_v2).max(self.gamma_e1).max(self.gamma_e2)
    }
}

/// Free-evolution Hamiltonian (V/4)σ_z^(v)σ_z^(e) plus the optional drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hamiltonian {
    pub v_dd: f64,
    pub drive: AcDrive,
}

impl Hamiltonian {
    fn static_part(&self) -> Op {
        spin_op(Spin::Nv, 'z') * spin_op(Spin::Electron, 'z') * c(self.v_dd / 4.0)
    }

    fn at(&self, t: f64) -> Op {
        let mut h = self.static_part();
        if self.drive.active() {
            let b = 0.5 * self.drive.amplitude * (self.drive.omega * t + self.drive.phase).sin();
            h += spin_op(Spin::Nv, 'z') * c(b);
        }
        h
    }
}

/// Density matrix of the NV ⊗ electron register with the sequence clock.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinRegister {
    pub rho: Op,
    pub clock: f64,
}

impl SpinRegister {
    /// ρ(0) = ¼(σ₀ + σ_z)⊗σ₀: NV polarised, electron maximally mixed.
    pub fn initial() -> Self {
        let rho = (Op::identity() + spin_op(Spin::Nv, 'z')) * c(0.25);
        Self { rho, clock: 0.0 }
    }

    pub fn expectation(&self, op: &Op) -> f64 {
        (self.rho * op).trace().re
    }

    pub fn nv_z(&self) -> f64 {
        self.expectation(&spin_op(Spin::Nv, 'z'))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (self.rho + self.rho.adjoint()) * c(0.5);
        SymmetricEigen::new(herm).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Hermiticity, unit trace and positivity checks.
    pub fn check(&self) -> Result<()> {
        let tr = self.rho.trace();
        if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-8 {
            return Err(Error::Consistency(format!("trace drifted to {tr}")));
        }
        let herm = (self.rho - self.rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > 1e-10 {
            return Err(Error::Consistency(format!("density matrix not Hermitian ({herm:e})")));
        }
        let lam = self.min_eigenvalue();
        if lam < -1e-10 {
            return Err(Error::Consistency(format!("negative eigenvalue {lam:e}")));
        }
        Ok(())
    }
}

fn vec_of(m: &Op) -> DVector<C> {
    DVector::from_column_slice(m.as_slice())
}

fn mat_of(v: &DVector<C>) -> Op {
    Op::from_column_slice(v.as_slice())
}

fn kron_dyn(a: &Op, b: &Op) -> DMatrix<C> {
    let mut m = DMatrix::zeros(16, 16);
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                for l in 0..4 {
                    m[(4 * i + k, 4 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    m
}

/// Column-stacking superoperator of −i[H,·] + Σ rate·𝒟[A].
pub fn superoperator(h: &Op, dissipators: &[(f64, Op)]) -> DMatrix<C> {
    let id = Op::identity();
    let mut l = (kron_dyn(&id, h) - kron_dyn(&h.transpose(), &id)) * (-C::i());
    for (rate, a) in dissipators {
        let ada = a.adjoint() * a;
        let term = kron_dyn(&a.conjugate(), a) - kron_dyn(&id, &ada) * c(0.5) - kron_dyn(&ada.transpose(), &id) * c(0.5);
        l += term * c(*rate);
    }
    l
}

fn rhs(h: &Op, dissipators: &[(f64, Op)], rho: &Op) -> Op {
    let mut d = (h * rho - rho * h) * (-C::i());
    for (rate, a) in dissipators {
        let ada = a.adjoint() * a;
        d += (a * rho * a.adjoint() - (ada * rho + rho * ada) * c(0.5)) * c(*rate);
    }
    d
}

/// Fixed-step RK4 over `dt` with `steps` steps.
fn rk4_fixed(reg: &SpinRegister, ham: &Hamiltonian, diss: &[(f64, Op)], dt: f64, steps: usize) -> SpinRegister {
    let h = dt / steps as f64;
    let mut rho = reg.rho;
    let mut t = reg.clock;
    for _ in 0..steps {
        let k1 = rhs(&ham.at(t), diss, &rho);
        let hm = ham.at(t + 0.5 * h);
        let k2 = rhs(&hm, diss, &(rho + k1 * c(0.5 * h)));
        let k3 = rhs(&hm, diss, &(rho + k2 * c(0.5 * h)));
        let k4 = rhs(&ham.at(t + h), diss, &(rho + k3 * c(h)));
        rho += (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(h / 6.0);
        t += h;
    }
    SpinRegister { rho, clock: reg.clock + dt }
}

/// RK4 propagation with step ≤ min(0.01/max rate, 2π/(50ω)) (also bounded by
/// the coupling and drive strength), halving the step until two successive
/// results differ by less than 1e-8.
pub fn propagate_rk4(reg: &SpinRegister, ham: &Hamiltonian, rates: &Rates, dt: f64) -> Result<SpinRegister> {
    let diss = rates.dissipators();
    let mut hmax = dt;
    if rates.max_rate() > 0.0 {
        hmax = hmax.min(0.01 / rates.max_rate());
    }
    if ham.drive.active() && ham.drive.omega > 0.0 {
        hmax = hmax.min(2.0 * PI / (50.0 * ham.drive.omega));
    }
    let strength = ham.v_dd.abs() / 2.0 + ham.drive.amplitude;
    if strength > 0.0 {
        hmax = hmax.min(0.05 / strength);
    }
    let mut steps = ((dt / hmax).ceil() as usize).max(1);
    let mut prev = rk4_fixed(reg, ham, &diss, dt, steps);
    for _ in 0..12 {
        steps *= 2;
        let next = rk4_fixed(reg, ham, &diss, dt, steps);
        let change = (next.rho - prev.rho).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if change < 1e-8 {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NonConvergence("RK4 step halving did not reach 1e-8".into()))
}

/// Free evolution over `dt`: exact exponential for a static generator,
/// RK4 when the AC drive is on.
pub fn propagate(reg: &SpinRegister, ham: &Hamiltonian, rates: &Rates, dt: f64) -> Result<SpinRegister> {
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::InvalidInput(format!("free evolution time must be >= 0, got {dt}")));
    }
    if dt == 0.0 {
        return Ok(reg.clone());
    }
    let out = if ham.drive.active() {
        propagate_rk4(reg, ham, rates, dt)?
    } else {
        let l = superoperator(&ham.static_part(), &rates.dissipators()) * c(dt);
        let v = l.exp() * vec_of(&reg.rho);
        SpinRegister { rho: mat_of(&v), clock: reg.clock + dt }
    };
    out.check()?;
    Ok(out)
}

/// One element of a pulse sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    /// Instantaneous rotation by `angle` about `axis` on `spin`.
    Pulse { spin: Spin, axis: Axis, angle: f64 },
    /// Free evolution for the given duration (µs).
    Free(f64),
    /// Discard NV transverse coherence, ρ → (ρ + Z ρ Z)/2 with Z = σ_z^(v).
    DephaseNv,
}

fn rotate(reg: &SpinRegister, spin: Spin, axis: Axis, angle: f64) -> SpinRegister {
    let n = axis.operator(spin);
    let u = Op::identity() * c((angle / 2.0).cos()) - n * (C::i() * (angle / 2.0).sin());
    SpinRegister { rho: u * reg.rho * u.adjoint(), clock: reg.clock }
}

/// Executes `steps` from `start`, checking the state after every step.
pub fn run_sequence(start: &SpinRegister, steps: &[Step], ham: &Hamiltonian, rates: &Rates) -> Result<SpinRegister> {
    let mut reg = start.clone();
    for step in steps {
        reg = match *step {
            Step::Pulse { spin, axis, angle } => rotate(&reg, spin, axis, angle),
            Step::Free(dt) => propagate(&reg, ham, rates, dt)?,
            Step::DephaseNv => {
                let z = spin_op(Spin::Nv, 'z');
                SpinRegister { rho: (reg.rho + z * reg.rho * z) * c(0.5), clock: reg.clock }
            }
        };
        reg.check()?;
    }
    Ok(reg)
}

fn pulse(spin: Spin, axis: Axis, angle: f64) -> Step {
    Step::Pulse { spin, axis, angle }
}

/// Hahn-echo block on the NV with an optional simultaneous electron π pulse,
/// closed by a π/2 pulse about `closing`.
fn echo_block(t: f64, electron_pi: bool, closing: Axis) -> Vec<Step> {
    let mut s = vec![pulse(Spin::Nv, Axis::X, PI / 2.0), Step::Free(t / 2.0), pulse(Spin::Nv, Axis::Y, PI)];
    if electron_pi {
        s.push(pulse(Spin::Electron, Axis::X, PI));
    }
    s.push(Step::Free(t / 2.0));
    s.push(pulse(Spin::Nv, closing, PI / 2.0));
    s
}

/// DEER sequence; the closing π/2 is taken about −x so that the bare echo
/// reads +1.
pub fn deer_sequence(t: f64) -> Vec<Step> {
    echo_block(t, true, Axis::MinusX)
}

pub fn echo_sequence(t: f64) -> Vec<Step> {
    echo_block(t, false, Axis::MinusX)
}

fn run_pair(p: &KernelParams, steps: &[Step]) -> Result<f64> {
    let ham = Hamiltonian { v_dd: p.v_dd, drive: AcDrive::off() };
    let rates = Rates { gamma_e1: p.gamma_e1, gamma_e2: p.gamma_e2, ..Rates::default() };
    Ok(run_sequence(&SpinRegister::initial(), steps, &ham, &rates)?.nv_z())
}

/// Oracle DEER signal Tr[σ_z^(v) ρ(t)].
pub fn run_deer(p: &KernelParams) -> Result<f64> {
    run_pair(p, &deer_sequence(p.t))
}

/// Oracle Hahn-echo signal Tr[σ_z^(v) ρ(t)].
pub fn run_echo(p: &KernelParams) -> Result<f64> {
    run_pair(p, &echo_sequence(p.t))
}

/// Phase of the final π/2 pulse of the second probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinalPhase {
    PlusY,
    MinusY,
}

/// Variant flags of the correlation T1 sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct T1Variant {
    pub with_pi: bool,
    pub final_phase: FinalPhase,
    /// Drop NV transverse coherence between the probes (see [`Step::DephaseNv`]).
    pub dephase_between_probes: bool,
}

/// Correlation T1 sequence: probe(t) closing about +y, optional NV
/// dephasing, τ/2, optional electron π, τ/2, probe(t) closing about ±y.
pub fn t1_sequence(tau: f64, t: f64, v: T1Variant) -> Vec<Step> {
    let mut s = echo_block(t, true, Axis::Y);
    if v.dephase_between_probes {
        s.push(Step::DephaseNv);
    }
    s.push(Step::Free(tau / 2.0));
    if v.with_pi {
        s.push(pulse(Spin::Electron, Axis::X, PI));
    }
    s.push(Step::Free(tau / 2.0));
    let closing = match v.final_phase {
        FinalPhase::PlusY => Axis::Y,
        FinalPhase::MinusY => Axis::MinusY,
    };
    s.extend(echo_block(t, true, closing));
    s
}

/// Channel value F_φ^A = Tr[ρ σ_z^(v)] of the correlation T1 sequence.
pub fn run_t1_sequence(p: &KernelParams, nv: &NvRelaxation, drive: &AcDrive, tau: f64, t: f64, variant: T1Variant) -> Result<f64> {
    let ham = Hamiltonian { v_dd: p.v_dd, drive: *drive };
    let rates = Rates::from_kernel(p, nv);
    Ok(run_sequence(&SpinRegister::initial(), &t1_sequence(tau, t, variant), &ham, &rates)?.nv_z())
}

/// All four channels (F_y^π, F_y^0, F_−y^π, F_−y^0) of the T1 sequence.
pub fn t1_channels(p: &KernelParams, nv: &NvRelaxation, drive: &AcDrive, tau: f64, t: f64) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    let combos = [(true, FinalPhase::PlusY), (false, FinalPhase::PlusY), (true, FinalPhase::MinusY), (false, FinalPhase::MinusY)];
    for (slot, (with_pi, final_phase)) in out.iter_mut().zip(combos) {
        let v = T1Variant { with_pi, final_phase, dephase_between_probes: true };
        *slot = run_t1_sequence(p, nv, drive, tau, t, v)?;
    }
    Ok(out)
}

/// One row of the oracle-versus-closed-form table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualRow {
    pub v_mhz: f64,
    pub gamma_e1: f64,
    pub gamma_e2: f64,
    pub t: f64,
    pub deer_closed: f64,
    pub deer_oracle: f64,
    pub echo_closed: f64,
    pub echo_oracle: f64,
}

impl ResidualRow {
    pub fn max_residual(&self) -> f64 {
        let dd = (self.deer_closed - self.deer_oracle).abs();
        let de = (self.echo_closed - self.echo_oracle).abs();
        let diff = ((self.deer_closed - self.echo_closed) - (self.deer_oracle - self.echo_oracle)).abs();
        dd.max(de).max(diff)
    }
}

/// Randomised sweep over V/2π ∈ [0.01, 10] MHz (log-uniform), γ_e1 ∈ [0, 2|V|],
/// γ_e2 ∈ [0, |V|], t ∈ [0, 10/|V|].
pub fn residual_sweep(n: usize, seed: u64) -> Result<Vec<ResidualRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let v_mhz = 10f64.powf(rng.random_range(-2.0..1.0));
        let v = 2.0 * PI * v_mhz;
        let g1 = rng.random_range(0.0..2.0) * v;
        let g2 = rng.random_range(0.0..1.0) * v;
        let t = rng.random_range(0.0..10.0) / v;
        let p = KernelParams::new(v, g1, g2, t)?;
        rows.push(ResidualRow {
            v_mhz,
            gamma_e1: g1,
            gamma_e2: g2,
            t,
            deer_closed: kernels::f_deer(&p),
            deer_oracle: run_deer(&p)?,
            echo_closed: kernels::f_echo(&p),
            echo_oracle: run_echo(&p)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kp(v: f64, g1: f64, g2: f64, t: f64) -> KernelParams {
        KernelParams::new(v, g1, g2, t).unwrap()
    }

    #[test]
    fn identity_evolution() {
        let reg = SpinRegister::initial();
        let ham = Hamiltonian { v_dd: 0.0, drive: AcDrive::off() };
        let out = propagate(&reg, &ham, &Rates::default(), 3.0).unwrap();
        let err = (out.rho - reg.rho).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-14);
    }

    #[test]
    fn electron_depolarization() {
        let up = (Op::identity() + spin_op(Spin::Electron, 'z')) * c(0.25);
        let reg = SpinRegister { rho: up, clock: 0.0 };
        let ham = Hamiltonian { v_dd: 0.0, drive: AcDrive::off() };
        let rates = Rates { gamma_e1: 0.7, ..Rates::default() };
        for t in [0.1, 1.0, 4.0] {
            let out = propagate(&reg, &ham, &rates, t).unwrap();
            let z = out.expectation(&spin_op(Spin::Electron, 'z'));
            assert!((z - (-0.7 * t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn exponential_matches_rk4() {
        let mut reg = SpinRegister::initial();
        reg = rotate(&reg, Spin::Nv, Axis::X, 1.1);
        reg = rotate(&reg, Spin::Electron, Axis::Y, 0.4);
        let ham = Hamiltonian { v_dd: 2.3, drive: AcDrive::off() };
        let rates = Rates { gamma_v1: 0.1, gamma_v2: 0.2, gamma_e1: 0.9, gamma_e2: 0.3 };
        let a = propagate(&reg, &ham, &rates, 2.5).unwrap();
        let b = propagate_rk4(&reg, &ham, &rates, 2.5).unwrap();
        let err = (a.rho - b.rho).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn echo_is_one_without_bath_dynamics() {
        for t in [0.0, 0.7, 5.0] {
            assert!((run_echo(&kp(3.1, 0.0, 0.0, t)).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn uncoupled_electron_is_invisible() {
        let p = kp(0.0, 0.8, 0.1, 2.0);
        assert!((run_deer(&p).unwrap() - run_echo(&p).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn oracle_matches_closed_forms() {
        for row in residual_sweep(40, 7).unwrap() {
            assert!(row.max_residual() < 1e-6, "{row:?}");
        }
        let v = 2.0 * PI * 0.5;
        for k in 0..=20 {
            let p = kp(v, 0.8 * v, 0.0, 0.5 * k as f64);
            assert!((run_deer(&p).unwrap() - kernels::f_deer(&p)).abs() < 1e-6);
        }
        let p = kp(2.0 * PI * 0.3, 2.0 * PI * 0.1, 0.0, 2.0);
        let oracle = run_deer(&p).unwrap() - run_echo(&p).unwrap();
        assert!((oracle - kernels::f_deer_minus_echo(&p)).abs() < 1e-6);
    }

    #[test]
    fn dephasing_rate_drops_out() {
        let a = kp(1.3, 0.6, 0.0, 3.0);
        let b = kp(1.3, 0.6, 2.5, 3.0);
        assert!((run_deer(&a).unwrap() - run_deer(&b).unwrap()).abs() < 1e-8);
        assert!((run_echo(&a).unwrap() - run_echo(&b).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn t1_channels_ideal_algebra() {
        // No decay, no drive, τ = 0: F_y^π − F_y^0 = 2 sin²(Vt/2)·… per the closed form.
        let v = 1.9;
        let p = kp(v, 0.0, 0.0, 0.0);
        let nv = NvRelaxation::default();
        for t in [0.4, 1.3] {
            let ch = t1_channels(&p, &nv, &AcDrive::off(), 0.0, t).unwrap();
            let cf = kernels::t1_sequence_signal(&p, &nv, 0.0, t).unwrap();
            assert!((ch[0] - ch[1] - 2.0 * cf).abs() < 1e-10);
            assert!((ch[2] + ch[0]).abs() < 1e-10 && (ch[3] + ch[1]).abs() < 1e-10);
            let s = kernels::composite_t1_signal(ch[0], ch[1], ch[2], ch[3]);
            assert!((s - 4.0 * cf).abs() < 1e-10);
        }
    }

    #[test]
    fn t1_oracle_matches_closed_form_with_decay() {
        let p = kp(2.0 * PI * 0.2, 0.05, 0.03, 0.0);
        let nv = NvRelaxation::new(0.01, 0.02).unwrap();
        for (tau, t) in [(0.0, 1.0), (3.0, 2.0), (10.0, 0.7)] {
            let ch = t1_channels(&p, &nv, &AcDrive::off(), tau, t).unwrap();
            let cf = kernels::t1_sequence_signal(&p, &nv, tau, t).unwrap();
            assert!((ch[0] - ch[1] - 2.0 * cf).abs() < 1e-10, "{tau} {t}");
        }
    }
}
