//! Shared vocabulary: resources, statuses, rules, manifests and access handles.
//!
//! Every type here serializes to a canonical JSON form (lower_snake_case
//! field names, enumerations as strings). Those encodings double as the
//! on-disk and wire format for the rest of the crate.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::virtual_profiles::ResourceOp;
use crate::workload::SessionScript;

/// Logical simulation time in seconds since the start of a run.
pub type Tick = u64;

/// The closed set of sensitive resources the broker mediates.
///
/// `Location` and `Storage` round out the hardware/data classes; the rest are
/// the resources named for virtual profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceClass {
    Camera,
    Microphone,
    Contacts,
    Messages,
    CallLog,
    Location,
    WifiState,
    Storage,
}

impl ResourceClass {
    pub const ALL: [ResourceClass; 8] = [
        ResourceClass::Camera,
        ResourceClass::Microphone,
        ResourceClass::Contacts,
        ResourceClass::Messages,
        ResourceClass::CallLog,
        ResourceClass::Location,
        ResourceClass::WifiState,
        ResourceClass::Storage,
    ];

    /// Canonical wire name, e.g. `"call_log"`.
    pub fn as_str(self) -> &'static str {
        match self {
            ResourceClass::Camera => "camera",
            ResourceClass::Microphone => "microphone",
            ResourceClass::Contacts => "contacts",
            ResourceClass::Messages => "messages",
            ResourceClass::CallLog => "call_log",
            ResourceClass::Location => "location",
            ResourceClass::WifiState => "wifi_state",
            ResourceClass::Storage => "storage",
        }
    }

    pub(crate) fn index(self) -> u64 {
        match self {
            ResourceClass::Camera => 0,
            ResourceClass::Microphone => 1,
            ResourceClass::Contacts => 2,
            ResourceClass::Messages => 3,
            ResourceClass::CallLog => 4,
            ResourceClass::Location => 5,
            ResourceClass::WifiState => 6,
            ResourceClass::Storage => 7,
        }
    }
}

impl fmt::Display for ResourceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ResourceClass::Camera => "Camera",
            ResourceClass::Microphone => "Microphone",
            ResourceClass::Contacts => "Contacts",
            ResourceClass::Messages => "Messages",
            ResourceClass::CallLog => "CallLog",
            ResourceClass::Location => "Location",
            ResourceClass::WifiState => "WifiState",
            ResourceClass::Storage => "Storage",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} `{value}`")]
pub struct ParseNameError {
    kind: &'static str,
    value: String,
}

impl FromStr for ResourceClass {
    type Err = ParseNameError;

    /// Accepts the wire name (`call_log`) or the display name (`CallLog`),
    /// case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String = s.chars().filter(|c| *c != '_' && *c != '-').collect();
        ResourceClass::ALL
            .into_iter()
            .find(|r| r.to_string().eq_ignore_ascii_case(&folded))
            .ok_or_else(|| ParseNameError {
                kind: "resource",
                value: s.to_owned(),
            })
    }
}

/// Outcome of a permission decision. Three-valued, no partial grants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermissionStatus {
    Grant,
    Deny,
    VirtualGrant,
}

impl PermissionStatus {
    pub const ALL: [PermissionStatus; 3] = [
        PermissionStatus::Grant,
        PermissionStatus::Deny,
        PermissionStatus::VirtualGrant,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PermissionStatus::Grant => "grant",
            PermissionStatus::Deny => "deny",
            PermissionStatus::VirtualGrant => "virtual_grant",
        }
    }
}

impl fmt::Display for PermissionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PermissionStatus {
    type Err = ParseNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "grant" => Ok(PermissionStatus::Grant),
            "deny" => Ok(PermissionStatus::Deny),
            "virtual_grant" | "virtualgrant" | "virtual" => Ok(PermissionStatus::VirtualGrant),
            _ => Err(ParseNameError {
                kind: "permission status",
                value: s.to_owned(),
            }),
        }
    }
}

/// Where a rule came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleOrigin {
    UserPrompt,
    UserEdit,
    Import,
}

/// One learned decision for an (app, resource) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub app_id: String,
    pub resource: ResourceClass,
    pub status: PermissionStatus,
    pub decided_at: Tick,
    pub origin: RuleOrigin,
}

impl Rule {
    pub fn new(
        app_id: impl Into<String>,
        resource: ResourceClass,
        status: PermissionStatus,
        decided_at: Tick,
        origin: RuleOrigin,
    ) -> Self {
        Rule {
            app_id: app_id.into(),
            resource,
            status,
            decided_at,
            origin,
        }
    }

    pub fn key(&self) -> (String, ResourceClass) {
        (self.app_id.clone(), self.resource)
    }
}

/// Whether the app can keep running when a resource is refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    /// The app aborts its session if this resource is refused.
    Required,
    Optional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermissionRequirement {
    pub resource: ResourceClass,
    pub criticality: Criticality,
}

impl PermissionRequirement {
    pub fn required(resource: ResourceClass) -> Self {
        PermissionRequirement {
            resource,
            criticality: Criticality::Required,
        }
    }

    pub fn optional(resource: ResourceClass) -> Self {
        PermissionRequirement {
            resource,
            criticality: Criticality::Optional,
        }
    }
}

/// A synthetic application: declared permissions plus the script it runs
/// whenever it is opened.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppManifest {
    pub app_id: String,
    pub display_name: String,
    pub requirements: Vec<PermissionRequirement>,
    pub script: SessionScript,
}

impl AppManifest {
    pub fn requirement(&self, resource: ResourceClass) -> Option<&PermissionRequirement> {
        self.requirements.iter().find(|r| r.resource == resource)
    }

    pub fn declares(&self, resource: ResourceClass) -> bool {
        self.requirement(resource).is_some()
    }
}

/// Identifier of a real or virtual resource session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub u64);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// The broker's answer to a resource request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AccessHandle {
    RealAccess {
        resource: ResourceClass,
        session_id: SessionId,
    },
    VirtualAccess {
        resource: ResourceClass,
        session_id: SessionId,
    },
    Refused {
        resource: ResourceClass,
    },
}

impl AccessHandle {
    pub fn resource(&self) -> ResourceClass {
        match *self {
            AccessHandle::RealAccess { resource, .. }
            | AccessHandle::VirtualAccess { resource, .. }
            | AccessHandle::Refused { resource } => resource,
        }
    }

    /// The status that yields this handle variant.
    pub fn status(&self) -> PermissionStatus {
        match self {
            AccessHandle::RealAccess { .. } => PermissionStatus::Grant,
            AccessHandle::VirtualAccess { .. } => PermissionStatus::VirtualGrant,
            AccessHandle::Refused { .. } => PermissionStatus::Deny,
        }
    }
}

/// A single reason a manifest is malformed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifestViolation {
    #[error("empty app_id")]
    EmptyAppId,
    #[error("duplicate requirement {resource}")]
    DuplicateRequirement { resource: ResourceClass },
    #[error("undeclared resource {resource}")]
    UndeclaredResource { resource: ResourceClass },
    #[error("step {step} operation targets {op_resource} but is filed under {resource}")]
    OperationMismatch {
        step: usize,
        resource: ResourceClass,
        op_resource: ResourceClass,
    },
    #[error("step {step} offset {offset_s}s precedes the previous step")]
    OffsetOutOfOrder { step: usize, offset_s: u64 },
    #[error("step {step} offset {offset_s}s exceeds session duration {duration_s}s")]
    OffsetPastEnd {
        step: usize,
        offset_s: u64,
        duration_s: u64,
    },
}

/// Checks every manifest invariant and returns all violations found.
///
/// An empty result means the manifest is valid. Uniqueness of `app_id`
/// across a simulation is a plan-level property and is checked there.
pub fn validate_manifest(manifest: &AppManifest) -> Vec<ManifestViolation> {
    let mut violations = Vec::new();
    if manifest.app_id.is_empty() {
        violations.push(ManifestViolation::EmptyAppId);
    }

    let mut seen = BTreeSet::new();
    for req in &manifest.requirements {
        if !seen.insert(req.resource) {
            violations.push(ManifestViolation::DuplicateRequirement {
                resource: req.resource,
            });
        }
    }

    let mut undeclared = BTreeSet::new();
    let mut prev_offset = 0;
    let duration_s = manifest.script.duration_s;
    for (step, s) in manifest.script.steps.iter().enumerate() {
        if !seen.contains(&s.resource) && undeclared.insert(s.resource) {
            violations.push(ManifestViolation::UndeclaredResource {
                resource: s.resource,
            });
        }
        let op_resource = ResourceOp::resource(&s.op);
        if op_resource != s.resource {
            violations.push(ManifestViolation::OperationMismatch {
                step,
                resource: s.resource,
                op_resource,
            });
        }
        if s.at_offset_s < prev_offset {
            violations.push(ManifestViolation::OffsetOutOfOrder {
                step,
                offset_s: s.at_offset_s,
            });
        }
        if s.at_offset_s > duration_s {
            violations.push(ManifestViolation::OffsetPastEnd {
                step,
                offset_s: s.at_offset_s,
                duration_s,
            });
        }
        prev_offset = prev_offset.max(s.at_offset_s);
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::ScriptStep;

    fn manifest(requirements: Vec<PermissionRequirement>, steps: Vec<ScriptStep>) -> AppManifest {
        AppManifest {
            app_id: "demo".into(),
            display_name: "Demo".into(),
            requirements,
            script: SessionScript {
                steps,
                duration_s: 1200,
            },
        }
    }

    #[test]
    fn empty_manifest_is_valid() {
        assert!(validate_manifest(&manifest(vec![], vec![])).is_empty());
    }

    #[test]
    fn undeclared_script_resource() {
        let m = manifest(
            vec![],
            vec![ScriptStep::new(
                0,
                ResourceOp::CameraCapture {
                    width: 2,
                    height: 2,
                },
            )],
        );
        let v = validate_manifest(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].to_string(), "undeclared resource Camera");
    }

    #[test]
    fn duplicate_requirement() {
        let m = manifest(
            vec![
                PermissionRequirement::optional(ResourceClass::Contacts),
                PermissionRequirement::required(ResourceClass::Contacts),
            ],
            vec![],
        );
        let v = validate_manifest(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].to_string(), "duplicate requirement Contacts");
    }

    #[test]
    fn every_violation_is_reported() {
        let mut m = manifest(
            vec![
                PermissionRequirement::optional(ResourceClass::Location),
                PermissionRequirement::optional(ResourceClass::Location),
            ],
            vec![
                ScriptStep::new(500, ResourceOp::LocationRead),
                ScriptStep::new(10, ResourceOp::WifiScan),
                ScriptStep {
                    resource: ResourceClass::Location,
                    op: ResourceOp::WifiScan,
                    at_offset_s: 5000,
                },
            ],
        );
        m.app_id.clear();
        let v = validate_manifest(&m);
        assert!(v.contains(&ManifestViolation::EmptyAppId));
        assert!(v.contains(&ManifestViolation::DuplicateRequirement {
            resource: ResourceClass::Location
        }));
        assert!(v.contains(&ManifestViolation::UndeclaredResource {
            resource: ResourceClass::WifiState
        }));
        assert!(v.contains(&ManifestViolation::OffsetOutOfOrder {
            step: 1,
            offset_s: 10
        }));
        assert!(v.iter().any(|x| matches!(x, ManifestViolation::OperationMismatch { step: 2, .. })));
        assert!(v.iter().any(|x| matches!(x, ManifestViolation::OffsetPastEnd { step: 2, .. })));
    }

    #[test]
    fn canonical_names() {
        assert_eq!(
            serde_json::to_string(&PermissionStatus::VirtualGrant).unwrap(),
            "\"virtual_grant\""
        );
        assert_eq!(
            serde_json::to_string(&ResourceClass::WifiState).unwrap(),
            "\"wifi_state\""
        );
        for r in ResourceClass::ALL {
            assert_eq!(r.as_str().parse::<ResourceClass>().unwrap(), r);
            assert_eq!(
                serde_json::to_string(&r).unwrap(),
                format!("\"{}\"", r.as_str())
            );
        }
        for s in PermissionStatus::ALL {
            assert_eq!(s.as_str().parse::<PermissionStatus>().unwrap(), s);
        }
        assert!("gps".parse::<ResourceClass>().is_err());
    }

    #[test]
    fn handle_encoding() {
        let h = AccessHandle::VirtualAccess {
            resource: ResourceClass::Camera,
            session_id: SessionId(7),
        };
        let json = serde_json::to_string(&h).unwrap();
        assert_eq!(
            json,
            r#"{"kind":"virtual_access","resource":"camera","session_id":7}"#
        );
        assert_eq!(serde_json::from_str::<AccessHandle>(&json).unwrap(), h);
    }
}
