//! The 47 physiological features, in canonical column order, with the
//! population parameters the synthetic generator draws from and the default
//! clinical caps.

use crate::N_FEATURES;

/// Which latent driver a feature reads out in the synthetic generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Driver {
    /// Overall illness severity.
    Severity,
    /// Fluid responsiveness trait.
    Fluid,
    /// Vasopressor responsiveness trait.
    Pressor,
    /// Pure noise.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureInfo {
    pub name: &'static str,
    pub mean: f64,
    pub sd: f64,
    pub cap_min: f64,
    pub cap_max: f64,
    pub driver: Driver,
    /// Signed loading on the driver; magnitude below 1.
    pub loading: f64,
}

const fn f(
    name: &'static str,
    mean: f64,
    sd: f64,
    cap_min: f64,
    cap_max: f64,
    driver: Driver,
    loading: f64,
) -> FeatureInfo {
    FeatureInfo {
        name,
        mean,
        sd,
        cap_min,
        cap_max,
        driver,
        loading,
    }
}

use Driver::{Fluid, None as Noise, Pressor, Severity};

pub static FEATURES: [FeatureInfo; N_FEATURES] = [
    // demographics / static
    f("Shock Index", 0.7, 0.2, 0.0, 3.0, Severity, 0.6),
    f("Elixhauser", 4.0, 2.5, 0.0, 20.0, Noise, 0.0),
    f("SIRS", 2.0, 1.0, 0.0, 4.0, Severity, 0.5),
    f("Gender", 0.5, 0.5, 0.0, 1.0, Noise, 0.0),
    f("Re-admission", 0.1, 0.3, 0.0, 1.0, Noise, 0.0),
    f("GCS", 12.0, 3.0, 3.0, 15.0, Severity, -0.6),
    f("SOFA", 6.0, 3.0, 0.0, 24.0, Severity, 0.8),
    f("Age", 65.0, 15.0, 18.0, 100.0, Noise, 0.0),
    // labs
    f("Albumin", 3.0, 0.6, 1.0, 6.0, Severity, -0.5),
    f("Arterial pH", 7.38, 0.08, 6.7, 7.8, Severity, -0.6),
    f("Calcium", 8.3, 0.8, 4.0, 20.0, Pressor, -0.6),
    f("Glucose", 140.0, 50.0, 1.0, 1000.0, Noise, 0.0),
    f("Haemoglobin", 10.5, 2.0, 3.0, 20.0, Fluid, 0.7),
    f("Magnesium", 2.0, 0.4, 0.5, 10.0, Noise, 0.0),
    f("PTT", 38.0, 15.0, 10.0, 150.0, Severity, 0.4),
    f("Potassium", 4.1, 0.6, 1.0, 15.0, Fluid, 0.6),
    f("SGPT", 60.0, 120.0, 0.0, 10000.0, Severity, 0.4),
    f("Arterial Blood Gas", -1.0, 5.0, -30.0, 30.0, Severity, -0.6),
    f("BUN", 30.0, 20.0, 1.0, 300.0, Severity, 0.5),
    f("Chloride", 105.0, 6.0, 70.0, 150.0, Fluid, 0.7),
    f("Bicarbonate", 23.0, 5.0, 2.0, 60.0, Severity, -0.6),
    f("INR", 1.5, 0.6, 0.5, 20.0, Severity, 0.5),
    f("Sodium", 139.0, 5.0, 100.0, 180.0, Fluid, 0.7),
    f("Arterial Lactate", 2.5, 2.0, 0.1, 30.0, Severity, 0.8),
    f("CO2", 24.0, 5.0, 5.0, 120.0, Fluid, -0.6),
    f("Creatinine", 1.6, 1.3, 0.1, 30.0, Severity, 0.5),
    f("Ionised Calcium", 1.12, 0.1, 0.5, 3.0, Pressor, -0.6),
    f("PT", 16.0, 6.0, 5.0, 150.0, Severity, 0.4),
    f("Platelets Count", 200.0, 100.0, 1.0, 2000.0, Severity, -0.5),
    f("SGOT", 80.0, 150.0, 0.0, 20000.0, Severity, 0.4),
    f("Total bilirubin", 1.5, 2.0, 0.0, 80.0, Severity, 0.4),
    f("White Blood Cell Count", 12.0, 6.0, 0.0, 200.0, Severity, 0.5),
    // vital signs
    f("Diastolic Blood Pressure", 60.0, 12.0, 0.0, 300.0, Pressor, -0.7),
    f("Systolic Blood Pressure", 115.0, 20.0, 0.0, 300.0, Pressor, -0.7),
    f("Mean Blood Pressure", 78.0, 14.0, 0.0, 300.0, Pressor, -0.8),
    f("PaCO2", 40.0, 9.0, 5.0, 200.0, Noise, 0.0),
    f("PaO2", 120.0, 60.0, 10.0, 700.0, Noise, 0.0),
    f("FiO2", 0.45, 0.15, 0.21, 1.0, Severity, 0.4),
    f("PaO/FiO2 ratio", 280.0, 120.0, 20.0, 3000.0, Severity, -0.5),
    f("Respiratory Rate", 20.0, 6.0, 0.0, 80.0, Severity, 0.5),
    f("Temperature", 37.0, 0.8, 25.0, 45.0, Severity, 0.3),
    f("Weight", 80.0, 20.0, 20.0, 300.0, Noise, 0.0),
    f("Heart Rate", 90.0, 18.0, 20.0, 250.0, Severity, 0.6),
    f("SpO2", 97.0, 2.5, 50.0, 100.0, Severity, -0.4),
    // intake / output
    f("Fluid Output 4h", 500.0, 400.0, 0.0, 5000.0, Fluid, -0.7),
    f("Total Fluid Output", 3000.0, 2500.0, 0.0, 50000.0, Fluid, -0.5),
    f("Mechanical Ventilation", 0.4, 0.5, 0.0, 1.0, Severity, 0.5),
];

pub fn feature_names() -> impl Iterator<Item = &'static str> {
    FEATURES.iter().map(|f| f.name)
}

pub fn feature_name(index: usize) -> &'static str {
    FEATURES.get(index).map_or("<unknown>", |f| f.name)
}
