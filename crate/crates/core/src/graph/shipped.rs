//! Model descriptions bundled with the crate.

/// A bundled model description.
#[derive(Clone, Copy, Debug)]
pub struct ShippedConfig {
    /// File stem, e.g. `yolov5s-gtb`.
    pub name: &'static str,
    /// Ablation label: which modifications the model carries.
    pub label: &'static str,
    pub source: &'static str,
}

macro_rules! shipped {
    ($($name:literal => $label:literal),* $(,)?) => {
        pub const SHIPPED: &[ShippedConfig] = &[
            $(ShippedConfig {
                name: $name,
                label: $label,
                source: include_str!(concat!("../../configs/", $name, ".json")),
            }),*
        ];
    };
}

shipped! {
    "yolov5s" => "YOLOv5s",
    "yolov5s-g" => "G",
    "yolov5s-t" => "T",
    "yolov5s-ca" => "CA",
    "yolov5s-b" => "B",
    "yolov5s-g-t" => "G+T",
    "yolov5s-g-ca" => "G+CA",
    "yolov5s-t-b" => "T+B",
    "yolov5s-g-ca-b" => "G+CA+B",
    "yolov5s-gtb" => "G+T+B",
}

/// Looks a bundled config up by file stem or ablation label.
pub fn shipped(name: &str) -> Option<&'static ShippedConfig> {
    SHIPPED.iter().find(|c| c.name == name || c.label.eq_ignore_ascii_case(name))
}
