use std::fmt::Write as _;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::IoError;
use crate::geometry::Vec2;

pub const FREE: u8 = 0;
pub const OCCUPIED: u8 = 255;

const EARTH_RADIUS_M: f64 = 6_378_137.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

/// Georeferenced raster of the field: `0` free, `255` occupied.
///
/// Pixel `(x, y)` covers `[x, x+1) × [y, y+1)` in continuous pixel
/// coordinates. Metric coordinates are pixel coordinates scaled by the
/// resolution, with the origin at the top-left corner of the grid; the
/// geodetic mapping is a local tangent plane (east = +x, north = −y).
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    cells: Vec<u8>,
    resolution: f64,
    geo_origin: GeoPoint,
}

impl OccupancyGrid {
    pub fn new(width: usize, height: usize, resolution: f64, geo_origin: GeoPoint) -> Self {
        Self {
            width,
            height,
            cells: vec![FREE; width * height],
            resolution,
            geo_origin,
        }
    }

    /// Builds a grid from raw cells; any nonzero value is taken as occupied.
    pub fn from_cells(
        width: usize,
        height: usize,
        cells: Vec<u8>,
        resolution: f64,
        geo_origin: GeoPoint,
    ) -> Self {
        assert_eq!(cells.len(), width * height, "cell buffer size mismatch");
        let cells = cells
            .into_iter()
            .map(|c| if c == FREE { FREE } else { OCCUPIED })
            .collect();
        Self {
            width,
            height,
            cells,
            resolution,
            geo_origin,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn geo_origin(&self) -> GeoPoint {
        self.geo_origin
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.cells[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.cells[y * self.width + x] = value;
    }

    /// Occupancy at integer pixel coordinates; out-of-bounds reads as free.
    pub fn is_occupied(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return false;
        }
        self.get(x as usize, y as usize) == OCCUPIED
    }

    /// Occupancy of the pixel containing a continuous pixel coordinate.
    pub fn is_occupied_at(&self, p: Vec2) -> bool {
        self.is_occupied(p.x.floor() as i64, p.y.floor() as i64)
    }

    /// Distance from a continuous pixel coordinate to the nearest occupied
    /// pixel square, searched up to `max` pixels; `INFINITY` beyond.
    pub fn clearance(&self, p: Vec2, max: f64) -> f64 {
        let r = max.ceil() as i64 + 1;
        let (cx, cy) = (p.x.floor() as i64, p.y.floor() as i64);
        let mut best = f64::INFINITY;
        for y in cy - r..=cy + r {
            for x in cx - r..=cx + r {
                if self.is_occupied(x, y) {
                    let dx = (x as f64 - p.x).max(p.x - (x + 1) as f64).max(0.0);
                    let dy = (y as f64 - p.y).max(p.y - (y + 1) as f64).max(0.0);
                    best = best.min(dx.hypot(dy));
                }
            }
        }
        if best <= max {
            best
        } else {
            f64::INFINITY
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c == OCCUPIED).count()
    }

    pub fn pixel_to_meters(&self, p: Vec2) -> Vec2 {
        p * self.resolution
    }

    pub fn meters_to_pixel(&self, m: Vec2) -> Vec2 {
        m / self.resolution
    }

    pub fn meters_to_geo(&self, m: Vec2) -> GeoPoint {
        let east = m.x;
        let north = -m.y;
        let lat0 = self.geo_origin.lat.to_radians();
        GeoPoint {
            lat: self.geo_origin.lat + (north / EARTH_RADIUS_M).to_degrees(),
            lon: self.geo_origin.lon + (east / (EARTH_RADIUS_M * lat0.cos())).to_degrees(),
        }
    }

    pub fn geo_to_meters(&self, g: GeoPoint) -> Vec2 {
        let lat0 = self.geo_origin.lat.to_radians();
        let north = (g.lat - self.geo_origin.lat).to_radians() * EARTH_RADIUS_M;
        let east = (g.lon - self.geo_origin.lon).to_radians() * EARTH_RADIUS_M * lat0.cos();
        Vec2::new(east, -north)
    }

    /// Exact 90° rotation of the raster: a direction `(dx, dy)` in
    /// pixel coordinates maps to `(-dy, dx)`.
    pub fn rotated_90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        let mut out = OccupancyGrid::new(h, w, self.resolution, self.geo_origin);
        for y in 0..h {
            for x in 0..w {
                // new_x = h-1-y, new_y = x
                out.set(h - 1 - y, x, self.get(x, y));
            }
        }
        out
    }

    /// Maps a continuous pixel coordinate through [`Self::rotated_90`].
    pub fn rotate_point_90(&self, p: Vec2) -> Vec2 {
        Vec2::new(self.height as f64 - p.y, p.x)
    }

    pub fn write_pgm<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.cells)
    }

    /// Reads an 8-bit binary PGM; georeference defaults to the origin.
    pub fn read_pgm<R: Read>(mut input: R, resolution: f64, geo_origin: GeoPoint) -> Result<Self, IoError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let mut pos = 0usize;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(IoError::Format("truncated PGM header".into()));
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // single whitespace byte separates header from raster
        pos += 1;
        if tokens[0] != "P5" {
            return Err(IoError::Format(format!("expected P5 magic, got {}", tokens[0])));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| IoError::Format(format!("bad PGM header value {s:?}")))
        };
        let width = parse(&tokens[1])?;
        let height = parse(&tokens[2])?;
        let maxval = parse(&tokens[3])?;
        if maxval == 0 || maxval > 255 {
            return Err(IoError::Format(format!("unsupported PGM maxval {maxval}")));
        }
        let raster = bytes
            .get(pos..pos + width * height)
            .ok_or_else(|| IoError::Format("truncated PGM raster".into()))?;
        Ok(Self::from_cells(width, height, raster.to_vec(), resolution, geo_origin))
    }

    /// Sidecar text with the georeference (`key = value` lines).
    pub fn georef_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "resolution = {}", self.resolution);
        let _ = writeln!(s, "origin_lat = {}", self.geo_origin.lat);
        let _ = writeln!(s, "origin_lon = {}", self.geo_origin.lon);
        s
    }

    pub fn parse_georef(text: &str) -> Result<(f64, GeoPoint), IoError> {
        let mut resolution = None;
        let mut lat = None;
        let mut lon = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| IoError::Format(format!("bad georef line {line:?}")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| IoError::Format(format!("bad georef value {line:?}")))?;
            match k.trim() {
                "resolution" => resolution = Some(v),
                "origin_lat" => lat = Some(v),
                "origin_lon" => lon = Some(v),
                other => return Err(IoError::Format(format!("unknown georef key {other:?}"))),
            }
        }
        match (resolution, lat, lon) {
            (Some(r), Some(lat), Some(lon)) if r > 0.0 => Ok((r, GeoPoint { lat, lon })),
            _ => Err(IoError::Format("georef needs resolution > 0, origin_lat, origin_lon".into())),
        }
    }

    /// Writes `<stem>.pgm` and `<stem>.geo`.
    pub fn save(&self, pgm_path: &Path) -> Result<(), IoError> {
        let mut buf = Vec::with_capacity(self.cells.len() + 32);
        self.write_pgm(&mut buf)?;
        std::fs::write(pgm_path, buf)?;
        std::fs::write(pgm_path.with_extension("geo"), self.georef_text())?;
        Ok(())
    }

    pub fn load(pgm_path: &Path) -> Result<Self, IoError> {
        let geo = std::fs::read_to_string(pgm_path.with_extension("geo"))?;
        let (resolution, origin) = Self::parse_georef(&geo)?;
        let file = std::fs::File::open(pgm_path)?;
        Self::read_pgm(io::BufReader::new(file), resolution, origin)
    }
}
