/// Published stability and error-constant summary of a built-in method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PublishedRow {
    pub method: &'static str,
    pub area_s90: f64,
    pub x_max: f64,
    pub area_s0: f64,
    pub y_max: f64,
    pub rho_damp: f64,
    pub c_im: f64,
    pub c_ex: f64,
}

pub const PUBLISHED: [PublishedRow; 4] = [
    PublishedRow {
        method: "IMEX-Peer2sve",
        area_s90: 6.68e-5,
        x_max: -5.68e-3,
        area_s0: 0.14,
        y_max: 0.36,
        rho_damp: 0.863,
        c_im: 1.94e-1,
        c_ex: 2.83e-1,
    },
    PublishedRow {
        method: "IMEX-Peer3sv",
        area_s90: 0.11,
        x_max: -0.25,
        area_s0: 0.55,
        y_max: 0.43,
        rho_damp: 0.254,
        c_im: 2.29e-1,
        c_ex: 1.43e-1,
    },
    PublishedRow {
        method: "IMEX-Peer4sve",
        area_s90: 1.66,
        x_max: -1.68,
        area_s0: 3.11,
        y_max: 0.92,
        rho_damp: 0.118,
        c_im: 2.02e-2,
        c_ex: 3.37e-2,
    },
    PublishedRow {
        method: "IMEX-Peer4sv",
        area_s90: 1.34e-3,
        x_max: -4.05e-2,
        area_s0: 0.63,
        y_max: 0.67,
        rho_damp: 0.632,
        c_im: 7.47e-2,
        c_ex: 6.75e-2,
    },
];

pub fn published(method: &str) -> Option<&'static PublishedRow> {
    PUBLISHED.iter().find(|r| r.method == method)
}

/// How a computed quantity is compared with its published value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    Absolute(f64),
    Relative(f64),
}

impl Tolerance {
    pub fn accepts(self, computed: f64, published: f64) -> bool {
        match self {
            Tolerance::Absolute(a) => (computed - published).abs() <= a,
            Tolerance::Relative(r) => (computed - published).abs() <= r * published.abs(),
        }
    }
}

/// Column name and tolerance for each published quantity.
pub const COLUMN_TOLERANCES: [(&str, Tolerance); 7] = [
    ("area_s90", Tolerance::Relative(0.10)),
    ("x_max", Tolerance::Relative(0.05)),
    ("area_s0", Tolerance::Relative(0.10)),
    ("y_max", Tolerance::Relative(0.05)),
    ("rho_damp", Tolerance::Absolute(0.002)),
    ("c_im", Tolerance::Relative(0.02)),
    ("c_ex", Tolerance::Relative(0.02)),
];

impl PublishedRow {
    pub fn column(&self, name: &str) -> Option<f64> {
        Some(match name {
            "area_s90" => self.area_s90,
            "x_max" => self.x_max,
            "area_s0" => self.area_s0,
            "y_max" => self.y_max,
            "rho_damp" => self.rho_damp,
            "c_im" => self.c_im,
            "c_ex" => self.c_ex,
            _ => return None,
        })
    }
}
