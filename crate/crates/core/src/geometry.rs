//! Model surfaces: a compact core of revolution with two unit-circle ends.
//!
//! The metric is `ds^2 + f(s)^4 dθ^2` with `f = 1` outside `[-a, a]`. Each
//! end carries an outward coordinate `r = |s| - (a + 4 + offset)`, so the
//! reference section `r = 0` sits at `s = ±(a + 4 + offset)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smooth compactly supported bump `exp(1 - 1/(1 - x^2))` on `|x| < 1`.
///
/// Returns the value with its first two derivatives. Peak value is 1 at
/// `x = 0`, where the second derivative is -2.
pub fn bump(x: f64) -> (f64, f64, f64) {
    if x.abs() >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let q = 1.0 - x * x;
    let b = (1.0 - 1.0 / q).exp();
    let g1 = -2.0 * x / (q * q);
    let g2 = -2.0 / (q * q) - 8.0 * x * x / (q * q * q);
    (b, b * g1, b * (g1 * g1 + g2))
}

/// Smooth monotone step: 0 for `x <= 0`, 1 for `x >= 1`.
pub fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / x).exp();
    let b = (-1.0 / (1.0 - x)).exp();
    a / (a + b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum End {
    #[serde(alias = "L")]
    Left,
    #[serde(alias = "R")]
    Right,
}

impl End {
    /// Sign of `s` on this end.
    pub fn sign(self) -> f64 {
        match self {
            End::Left => -1.0,
            End::Right => 1.0,
        }
    }

    pub fn opposite(self) -> End {
        match self {
            End::Left => End::Right,
            End::Right => End::Left,
        }
    }

    pub fn index(self) -> usize {
        match self {
            End::Left => 0,
            End::Right => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            End::Left => "L",
            End::Right => "R",
        }
    }

    pub const BOTH: [End; 2] = [End::Left, End::Right];
}

impl std::fmt::Display for End {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for End {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "L" | "l" | "left" => Ok(End::Left),
            "R" | "r" | "right" => Ok(End::Right),
            _ => Err(format!("unknown end '{s}' (expected L or R)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Constant,
    Bulge,
    Hourglass,
}

/// Value of the warping function and its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileValue {
    pub f: f64,
    pub df: f64,
    pub d2f: f64,
}

/// Warping function `f(s) = 1 + amplitude * bump((s - center) / width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    kind: ProfileKind,
    amplitude: f64,
    half_width: f64,
    width: f64,
    center: f64,
}

impl Profile {
    pub fn constant(half_width: f64) -> Result<Self> {
        Self::new(ProfileKind::Constant, 0.0, half_width, half_width, 0.0)
    }

    pub fn bulge(amplitude: f64, half_width: f64) -> Result<Self> {
        Self::new(ProfileKind::Bulge, amplitude, half_width, half_width, 0.0)
    }

    /// Hourglass with neck radius `f_min = 1 + amplitude`.
    pub fn hourglass(amplitude: f64, half_width: f64) -> Result<Self> {
        Self::new(ProfileKind::Hourglass, amplitude, half_width, half_width, 0.0)
    }

    /// Full constructor. The bump lives on `[center - width, center + width]`,
    /// which must fit inside `[-half_width, half_width]`.
    pub fn new(
        kind: ProfileKind,
        amplitude: f64,
        half_width: f64,
        width: f64,
        center: f64,
    ) -> Result<Self> {
        let bad = |msg: &str| Err(Error::InvalidModel(msg.to_string()));
        if !(half_width.is_finite() && half_width > 0.0) {
            return bad("profile half-width must be positive");
        }
        if !(width.is_finite() && width > 0.0) {
            return bad("profile bump width must be positive");
        }
        if center.abs() + width > half_width * (1.0 + 1e-12) {
            return bad("profile bump must lie inside [-a, a]");
        }
        match kind {
            ProfileKind::Constant if amplitude != 0.0 => {
                return bad("constant profile takes amplitude 0")
            }
            ProfileKind::Bulge if !(amplitude > 0.0) => {
                return bad("bulge amplitude must be positive")
            }
            ProfileKind::Hourglass if !(amplitude < 0.0 && amplitude > -1.0) => {
                return bad("hourglass amplitude must lie in (-1, 0)")
            }
            _ => {}
        }
        if !amplitude.is_finite() {
            return bad("profile amplitude must be finite");
        }
        Ok(Self { kind, amplitude, half_width, width, center })
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    /// Same profile reflected through `s = 0`.
    pub fn mirrored(&self) -> Self {
        Self { center: -self.center, ..self.clone() }
    }

    pub fn eval(&self, s: f64) -> ProfileValue {
        let x = (s - self.center) / self.width;
        let (b, db, d2b) = bump(x);
        ProfileValue {
            f: 1.0 + self.amplitude * b,
            df: self.amplitude * db / self.width,
            d2f: self.amplitude * d2b / (self.width * self.width),
        }
    }

    /// Support of `f - 1`, as a closed interval.
    pub fn support(&self) -> (f64, f64) {
        (self.center - self.width, self.center + self.width)
    }

    /// Smallest value of `f`.
    pub fn f_min(&self) -> f64 {
        1.0 + self.amplitude.min(0.0)
    }

    pub fn f_max(&self) -> f64 {
        1.0 + self.amplitude.max(0.0)
    }

    /// Location of the single critical point inside the core, if any.
    pub fn critical_point(&self) -> Option<f64> {
        match self.kind {
            ProfileKind::Constant => None,
            _ => Some(self.center),
        }
    }
}

/// One smooth bump term `amplitude * bump((s - center) / width)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpTerm {
    pub amplitude: f64,
    pub width: f64,
    #[serde(default)]
    pub center: f64,
}

impl BumpTerm {
    pub fn eval(&self, s: f64) -> (f64, f64) {
        let (b, db, _) = bump((s - self.center) / self.width);
        (self.amplitude * b, self.amplitude * db / self.width)
    }
}

/// Sum of bump terms; the empty sum is the zero potential.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bumps(pub Vec<BumpTerm>);

impl Bumps {
    pub fn zero() -> Self {
        Self(Vec::new())
    }

    pub fn single(amplitude: f64, width: f64, center: f64) -> Self {
        Self(vec![BumpTerm { amplitude, width, center }])
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|t| t.amplitude == 0.0)
    }

    /// Value and derivative.
    pub fn eval(&self, s: f64) -> (f64, f64) {
        self.0.iter().fold((0.0, 0.0), |(v, dv), t| {
            let (a, da) = t.eval(s);
            (v + a, dv + da)
        })
    }

    pub fn value(&self, s: f64) -> f64 {
        self.eval(s).0
    }

    fn extent(&self) -> f64 {
        self.0
            .iter()
            .filter(|t| t.amplitude != 0.0)
            .map(|t| t.center.abs() + t.width)
            .fold(0.0, f64::max)
    }
}

/// Potential `V0 + h^2 V2`, plus the extra `h^2 W` term of the
/// flat-cylinder model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PotentialSpec {
    pub v0: Bumps,
    pub v2: Bumps,
    pub w: Bumps,
}

impl PotentialSpec {
    pub fn none() -> Self {
        Self::default()
    }

    /// Classical part `V0` with derivative.
    pub fn classical(&self, s: f64) -> (f64, f64) {
        self.v0.eval(s)
    }

    /// Coefficient of `h^2` in the full potential.
    pub fn subprincipal(&self, s: f64) -> f64 {
        self.v2.value(s) + self.w.value(s)
    }

    fn extent(&self) -> f64 {
        self.v0.extent().max(self.v2.extent()).max(self.w.extent())
    }
}

pub const DEFAULT_THRESHOLD_GUARD: f64 = 1e-3;

/// Complete model: profile, potentials, semiclassical parameter and the
/// position of the reference sections.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub profile: Profile,
    pub potential: PotentialSpec,
    pub h: f64,
    pub origin_offset: f64,
    pub threshold_guard: f64,
}

impl ModelSpec {
    pub fn new(profile: Profile, potential: PotentialSpec, h: f64) -> Result<Self> {
        let m = Self {
            profile,
            potential,
            h,
            origin_offset: 0.0,
            threshold_guard: DEFAULT_THRESHOLD_GUARD,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn free(half_width: f64, h: f64) -> Result<Self> {
        Self::new(Profile::constant(half_width)?, PotentialSpec::none(), h)
    }

    pub fn with_h(&self, h: f64) -> Self {
        Self { h, ..self.clone() }
    }

    pub fn with_origin_offset(&self, origin_offset: f64) -> Self {
        Self { origin_offset, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        if !(self.h.is_finite() && self.h > 0.0) {
            return bad(format!("h must be positive, got {}", self.h));
        }
        if !(self.threshold_guard.is_finite() && self.threshold_guard > 0.0 && self.threshold_guard < 1.0) {
            return bad(format!("threshold guard must lie in (0,1), got {}", self.threshold_guard));
        }
        if !self.origin_offset.is_finite() || self.origin_offset <= -4.0 {
            return bad(format!("origin offset must exceed -4, got {}", self.origin_offset));
        }
        let a = self.half_width();
        if self.potential.extent() > a * (1.0 + 1e-12) {
            return bad("potential terms must be supported in [-a, a]".into());
        }
        Ok(())
    }

    pub fn half_width(&self) -> f64 {
        self.profile.half_width()
    }

    /// Distance from `s = 0` to either reference section.
    pub fn section(&self) -> f64 {
        self.half_width() + 4.0 + self.origin_offset
    }

    /// End coordinate of `s`; meaningful for `|s| > a`.
    pub fn r_of_s(&self, s: f64) -> f64 {
        s.abs() - self.section()
    }

    pub fn s_of_r(&self, end: End, r: f64) -> f64 {
        end.sign() * (self.section() + r)
    }

    /// Which end a point with `|s| > a` lies on.
    pub fn end_of_s(&self, s: f64) -> End {
        if s < 0.0 {
            End::Left
        } else {
            End::Right
        }
    }

    /// Classical effective potential `f^-4 eta^2 + V0` and its derivative.
    pub fn effective_potential(&self, s: f64, eta: f64) -> (f64, f64) {
        let p = self.profile.eval(s);
        let (v, dv) = self.potential.classical(s);
        let f4 = p.f.powi(4);
        (eta * eta / f4 + v, -4.0 * eta * eta * p.df / (f4 * p.f) + dv)
    }
}

/// One open angular mode, shared by both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    pub m: i64,
    /// `sqrt(1 - h^2 m^2)`
    pub tau: f64,
}

impl Channel {
    pub fn wavenumber(&self, h: f64) -> f64 {
        self.tau / h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h: f64,
    /// Sorted by `m`, symmetric under `m -> -m`.
    pub channels: Vec<Channel>,
    /// Modes with `|1 - h^2 m^2|` below the guard; never in `channels`.
    pub threshold_modes: Vec<i64>,
}

impl ChannelSet {
    /// Number of channels over both ends.
    pub fn dim(&self) -> usize {
        2 * self.channels.len()
    }

    pub fn modes(&self) -> impl Iterator<Item = i64> + '_ {
        self.channels.iter().map(|c| c.m)
    }

    pub fn max_mode(&self) -> i64 {
        self.channels.last().map_or(0, |c| c.m)
    }

    pub fn index_of(&self, m: i64) -> Option<usize> {
        self.channels.binary_search_by_key(&m, |c| c.m).ok()
    }
}

/// Open modes `h^2 m^2 <= 1 - guard`; near-threshold modes are flagged.
pub fn open_channels(model: &ModelSpec) -> ChannelSet {
    channels_for(model.h, model.threshold_guard)
}

/// As [`open_channels`], but a flagged threshold mode is an error.
pub fn open_channels_strict(model: &ModelSpec) -> Result<ChannelSet> {
    let set = open_channels(model);
    if let Some(&m) = set.threshold_modes.iter().find(|&&m| m >= 0) {
        let hm = model.h * m as f64;
        return Err(Error::ThresholdCollision { mode: m, gap: (1.0 - hm * hm).abs() });
    }
    Ok(set)
}

pub fn channels_for(h: f64, guard: f64) -> ChannelSet {
    let top = (1.0 / h).ceil() as i64 + 1;
    let mut channels = Vec::new();
    let mut threshold_modes = Vec::new();
    for m in -top..=top {
        let hm = h * m as f64;
        let gap = 1.0 - hm * hm;
        if gap.abs() < guard {
            threshold_modes.push(m);
        } else if gap >= guard {
            channels.push(Channel { m, tau: gap.sqrt() });
        }
    }
    ChannelSet { h, channels, threshold_modes }
}

/// Critical angular momentum of an hourglass: `f_min^2`.
///
/// Trajectories with `|eta| < eta_c` cross the neck, larger ones turn back.
pub fn eta_c(profile: &Profile) -> Result<f64> {
    match profile.kind() {
        ProfileKind::Hourglass | ProfileKind::Constant => Ok(profile.f_min().powi(2)),
        ProfileKind::Bulge => Err(Error::NotHourglass),
    }
}
