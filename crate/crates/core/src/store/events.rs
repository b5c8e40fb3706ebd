use std::fmt;

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::draft::{AddMode, Direction, EditTarget, SectionId, TextEdit, WorkspaceId};
use crate::gateway::Purpose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventClass {
    WritingAction,
    Structural,
    ProviderCall,
    UiAction,
    Open,
    Save,
}

impl fmt::Display for EventClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EventClass::WritingAction => "writing_action",
            EventClass::Structural => "structural",
            EventClass::ProviderCall => "provider_call",
            EventClass::UiAction => "ui_action",
            EventClass::Open => "open",
            EventClass::Save => "save",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum StructuralOp {
    Add {
        section_id: SectionId,
        after: SectionId,
        header: String,
        mode: AddMode,
    },
    Move {
        section_id: SectionId,
        direction: Direction,
    },
    Delete {
        section_id: SectionId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum EventPayload {
    /// One insertion or deletion of a character or span.
    WritingAction {
        section_id: SectionId,
        target: EditTarget,
        edit: TextEdit,
    },
    Structural {
        #[serde(flatten)]
        op: StructuralOp,
    },
    ProviderCall {
        purpose: Purpose,
        #[serde(skip_serializing_if = "Option::is_none")]
        section_id: Option<SectionId>,
        ok: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
    UiAction {
        #[serde(skip_serializing_if = "Option::is_none")]
        section_id: Option<SectionId>,
        action: String,
    },
    Open,
    Save,
}

/// One line of the append-only interaction log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub timestamp: Timestamp,
    pub workspace_id: WorkspaceId,
    #[serde(flatten)]
    pub payload: EventPayload,
}

impl InteractionEvent {
    pub fn new(timestamp: Timestamp, workspace_id: WorkspaceId, payload: EventPayload) -> Self {
        InteractionEvent {
            timestamp,
            workspace_id,
            payload,
        }
    }

    pub fn class(&self) -> EventClass {
        match self.payload {
            EventPayload::WritingAction { .. } => EventClass::WritingAction,
            EventPayload::Structural { .. } => EventClass::Structural,
            EventPayload::ProviderCall { .. } => EventClass::ProviderCall,
            EventPayload::UiAction { .. } => EventClass::UiAction,
            EventPayload::Open => EventClass::Open,
            EventPayload::Save => EventClass::Save,
        }
    }

    pub fn is_writing_action(&self) -> bool {
        self.class() == EventClass::WritingAction
    }
}
