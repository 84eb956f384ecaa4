//! Trajectory representation and distance primitives.
//!
//! Trajectories are ordered sequences of timestamped GPS fixes. For distance
//! math every fix is projected into a local planar frame (meters east/north
//! of a reference origin); the original lon/lat coordinates are retained for
//! output. The trajectory-to-trajectory distance is the symmetrized
//! segment-path distance (SSPD): the mean, over each trajectory's points, of
//! the minimum Euclidean distance to the other trajectory's segments,
//! averaged over both directions. It compares paths as a whole, regardless
//! of time indexing or sample count.

use alloc::string::String;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// Mean Earth radius in meters, consistent with the 6371 km Haversine radius.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Mean Earth radius in kilometers.
pub const EARTH_RADIUS_KM: f64 = 6_371.0;

/// A WGS84 coordinate pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    /// Longitude in degrees, `[-180, 180]`.
    pub lon: f64,
    /// Latitude in degrees, `[-90, 90]`.
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self> {
        let p = GeoPoint { lon, lat };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lon.is_finite()
            && self.lat.is_finite()
            && (-180.0..=180.0).contains(&self.lon)
            && (-90.0..=90.0).contains(&self.lat);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidCoordinate { lon: self.lon, lat: self.lat })
        }
    }
}

/// A point in the local planar frame: meters east (`x`) and north (`y`) of
/// the dataset reference origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub fn new(x: f64, y: f64) -> Self {
        PlanarPoint { x, y }
    }

    /// Euclidean distance to `other` in meters.
    pub fn distance(&self, other: &PlanarPoint) -> f64 {
        math::hypot(self.x - other.x, self.y - other.y)
    }
}

/// A straight segment between two consecutive trajectory points. Degenerate
/// segments (`a == b`, from repeated GPS fixes) are permitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: PlanarPoint,
    pub b: PlanarPoint,
}

impl Segment {
    pub fn new(a: PlanarPoint, b: PlanarPoint) -> Self {
        Segment { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.distance(&self.b)
    }
}

/// Fraction of a trajectory's piecewise length, `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrefixFraction(f64);

impl PrefixFraction {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_finite() && (0.0..=1.0).contains(&p) {
            Ok(PrefixFraction(p))
        } else {
            Err(Error::InvalidPrefixFraction(p))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Project a geographic point into the local planar frame around `origin`.
///
/// Equirectangular local projection: `x = R·cos(lat0)·Δlon`, `y = R·Δlat`
/// (angles in radians). Sub-meter round-trip error within a 50 km box around
/// the origin. The point must lie within one degree of the origin on both
/// axes; city-scale datasets always do, and the guard catches gross misuse.
pub fn project(g: GeoPoint, origin: GeoPoint) -> Result<PlanarPoint> {
    g.validate()?;
    origin.validate()?;
    let dlon = g.lon - origin.lon;
    let dlat = g.lat - origin.lat;
    if math::abs(dlon) > 1.0 || math::abs(dlat) > 1.0 {
        return Err(Error::ProjectionOutOfRange { dlon, dlat });
    }
    let x = EARTH_RADIUS_M * math::cos(origin.lat.to_radians()) * dlon.to_radians();
    let y = EARTH_RADIUS_M * dlat.to_radians();
    Ok(PlanarPoint { x, y })
}

/// Exact inverse of [`project`].
pub fn unproject(p: PlanarPoint, origin: GeoPoint) -> GeoPoint {
    let dlat = p.y / EARTH_RADIUS_M;
    let dlon = p.x / (EARTH_RADIUS_M * math::cos(origin.lat.to_radians()));
    GeoPoint {
        lon: origin.lon + dlon.to_degrees(),
        lat: origin.lat + dlat.to_degrees(),
    }
}

/// Great-circle distance in kilometers on a sphere of radius 6371 km.
///
/// `a = sin²(Δlat/2) + cos(lat1)·cos(lat2)·sin²(Δlon/2)`, distance
/// `2·r·atan2(√a, √(1−a))`. The `atan2` form is defined even when the
/// points are antipodal (`a = 1`).
pub fn haversine(d1: GeoPoint, d2: GeoPoint) -> f64 {
    let lat1 = d1.lat.to_radians();
    let lat2 = d2.lat.to_radians();
    let half_dlat = (lat2 - lat1) / 2.0;
    let half_dlon = (d2.lon - d1.lon).to_radians() / 2.0;
    let s_lat = math::sin(half_dlat);
    let s_lon = math::sin(half_dlon);
    let a = (s_lat * s_lat + math::cos(lat1) * math::cos(lat2) * s_lon * s_lon).clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_KM * math::atan2(math::sqrt(a), math::sqrt(1.0 - a))
}

/// Distance from a point to a segment: the perpendicular distance when the
/// orthogonal projection of `p` onto the segment's line falls within the
/// segment, otherwise the distance to the nearest endpoint.
pub fn point_to_segment(p: PlanarPoint, s: Segment) -> f64 {
    let dx = s.b.x - s.a.x;
    let dy = s.b.y - s.a.y;
    let len_sq = dx * dx + dy * dy;
    if len_sq == 0.0 {
        // Degenerate segment from a repeated fix.
        return p.distance(&s.a);
    }
    let t = ((p.x - s.a.x) * dx + (p.y - s.a.y) * dy) / len_sq;
    if t <= 0.0 {
        p.distance(&s.a)
    } else if t >= 1.0 {
        p.distance(&s.b)
    } else {
        let foot = PlanarPoint::new(s.a.x + t * dx, s.a.y + t * dy);
        p.distance(&foot)
    }
}

/// Minimum distance from a point to any segment of a trajectory.
pub fn point_to_trajectory(p: PlanarPoint, t: &Trajectory) -> f64 {
    let pts = t.points();
    if pts.len() == 1 {
        return p.distance(&pts[0]);
    }
    let mut best = f64::INFINITY;
    for w in pts.windows(2) {
        let d = point_to_segment(p, Segment::new(w[0], w[1]));
        if d < best {
            best = d;
        }
    }
    best
}

/// Directed segment-path distance: mean over the points of `t1` of their
/// distance to `t2`. Asymmetric in general.
pub fn spd(t1: &Trajectory, t2: &Trajectory) -> f64 {
    let pts = t1.points();
    let mut sum = 0.0;
    for &p in pts {
        sum += point_to_trajectory(p, t2);
    }
    sum / pts.len() as f64
}

/// Symmetrized segment-path distance: the mean of the two directed distances.
pub fn sspd(t1: &Trajectory, t2: &Trajectory) -> f64 {
    (spd(t1, t2) + spd(t2, t1)) / 2.0
}

/// An ordered sequence of timestamped GPS fixes, held both in the local
/// planar frame and as the original geographic coordinates.
///
/// Constructed trajectories always have at least two points and
/// non-decreasing timestamps. Prefixes extracted via [`prefix`] may narrow
/// to a single point (a trip observed at 0% completion).
#[derive(Debug, Clone)]
pub struct Trajectory {
    id: String,
    planar: Vec<PlanarPoint>,
    times: Vec<i64>,
    geo: Vec<GeoPoint>,
    origin: GeoPoint,
    start_hour: u8,
    start_weekday: u8,
    piecewise_len: f64,
}

impl Trajectory {
    /// Build a trajectory from geographic fixes, projecting them around
    /// `origin`. Requires at least two fixes with non-decreasing timestamps.
    pub fn from_geo(
        id: impl Into<String>,
        samples: &[(GeoPoint, i64)],
        origin: GeoPoint,
    ) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::TooFewPoints { have: samples.len(), need: 2 });
        }
        let mut planar = Vec::with_capacity(samples.len());
        let mut times = Vec::with_capacity(samples.len());
        let mut geo = Vec::with_capacity(samples.len());
        let mut prev_t = i64::MIN;
        for &(g, t) in samples {
            if t < prev_t {
                return Err(Error::NonMonotonicTimestamps);
            }
            prev_t = t;
            planar.push(project(g, origin)?);
            times.push(t);
            geo.push(g);
        }
        Ok(Self::assemble(id.into(), planar, times, geo, origin))
    }

    /// Build a trajectory from planar points directly; geographic fixes are
    /// recovered by unprojecting around `origin`.
    pub fn from_planar(
        id: impl Into<String>,
        points: Vec<PlanarPoint>,
        times: Vec<i64>,
        origin: GeoPoint,
    ) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::TooFewPoints { have: points.len(), need: 2 });
        }
        if points.len() != times.len() {
            return Err(Error::LengthMismatch { left: points.len(), right: times.len() });
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::NonMonotonicTimestamps);
        }
        let geo = points.iter().map(|&p| unproject(p, origin)).collect();
        Ok(Self::assemble(id.into(), points, times, geo, origin))
    }

    fn assemble(
        id: String,
        planar: Vec<PlanarPoint>,
        times: Vec<i64>,
        geo: Vec<GeoPoint>,
        origin: GeoPoint,
    ) -> Self {
        let piecewise_len = piecewise_length(&planar);
        let (start_hour, start_weekday) = hour_and_weekday(times[0]);
        Trajectory {
            id,
            planar,
            times,
            geo,
            origin,
            start_hour,
            start_weekday,
            piecewise_len,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Points in the local planar frame.
    pub fn points(&self) -> &[PlanarPoint] {
        &self.planar
    }

    /// Per-point timestamps (seconds since the Unix epoch).
    pub fn times(&self) -> &[i64] {
        &self.times
    }

    /// Original geographic coordinates, index-aligned with [`points`].
    ///
    /// [`points`]: Trajectory::points
    pub fn geo_points(&self) -> &[GeoPoint] {
        &self.geo
    }

    /// Projection origin shared by every point of this trajectory.
    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    /// Number of fixes.
    pub fn point_count(&self) -> usize {
        self.planar.len()
    }

    /// Sum of segment lengths in meters.
    pub fn piecewise_len(&self) -> f64 {
        self.piecewise_len
    }

    /// Hour of day (0–23, UTC) at which the trip starts.
    pub fn start_hour(&self) -> u8 {
        self.start_hour
    }

    /// Day of week (1 = Monday … 7 = Sunday) on which the trip starts.
    pub fn start_weekday(&self) -> u8 {
        self.start_weekday
    }

    /// Final fix in the planar frame.
    pub fn final_point(&self) -> PlanarPoint {
        *self.planar.last().expect("trajectory has at least one point")
    }

    /// Final fix in geographic coordinates.
    pub fn final_geo(&self) -> GeoPoint {
        *self.geo.last().expect("trajectory has at least one point")
    }
}

/// The maximal prefix of `t` whose piecewise length does not exceed `p`
/// times the full piecewise length. Always keeps at least the first point;
/// `p = 1` returns the whole trajectory.
pub fn prefix(t: &Trajectory, p: PrefixFraction) -> Trajectory {
    let budget = p.value() * t.piecewise_len;
    let mut kept = 1;
    let mut acc = 0.0;
    for w in t.planar.windows(2) {
        // Accumulate in the same order as the stored total so p = 1 is exact.
        acc += w[0].distance(&w[1]);
        if acc <= budget {
            kept += 1;
        } else {
            break;
        }
    }
    Trajectory {
        id: t.id.clone(),
        planar: t.planar[..kept].to_vec(),
        times: t.times[..kept].to_vec(),
        geo: t.geo[..kept].to_vec(),
        origin: t.origin,
        start_hour: t.start_hour,
        start_weekday: t.start_weekday,
        piecewise_len: piecewise_length(&t.planar[..kept]),
    }
}

fn piecewise_length(points: &[PlanarPoint]) -> f64 {
    let mut acc = 0.0;
    for w in points.windows(2) {
        acc += w[0].distance(&w[1]);
    }
    acc
}

/// Hour of day and ISO weekday (Monday = 1) for a Unix timestamp, UTC.
fn hour_and_weekday(epoch: i64) -> (u8, u8) {
    let days = epoch.div_euclid(86_400);
    let secs_of_day = epoch.rem_euclid(86_400);
    let hour = (secs_of_day / 3_600) as u8;
    // 1970-01-01 was a Thursday.
    let weekday = ((days + 3).rem_euclid(7) + 1) as u8;
    (hour, weekday)
}
