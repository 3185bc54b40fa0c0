use crate::manifest::{ConcernManifest, ManifestError, ModuleDecl, ModuleKind};

use super::runtime::{Aspect, OperationRegistry};

/// How concern code is laid out in a build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitMode {
    /// Concerns inlined into the class modules they crosscut.
    Tangled,
    /// Concerns in their own aspect modules.
    Woven,
}

/// Describes a build as a concern manifest.
///
/// Woven: class modules list their core tags and each aspect becomes an
/// aspect module with its one concern tag. Tangled: each class module also
/// lists the tag of every aspect whose pointcut matches one of its
/// operations, in aspect order, and no aspect modules appear.
pub fn emit_manifest<C, A, R>(
    registry: &OperationRegistry<C, A, R>,
    aspects: &[Aspect<C, A, R>],
    mode: EmitMode,
) -> Result<ConcernManifest, ManifestError> {
    let mut modules = Vec::new();
    for m in registry.modules() {
        let mut decl = ModuleDecl::new(&m.name, ModuleKind::ClassModule, m.core_tags.clone())?;
        if mode == EmitMode::Tangled {
            for aspect in aspects {
                let crosscuts = registry.join_points_of(&m.name).any(|jp| aspect.applies_to(&jp));
                if crosscuts && !decl.tags().contains(aspect.concern_tag()) {
                    decl.push_tag(aspect.concern_tag().clone())?;
                }
            }
        }
        modules.push(decl);
    }
    if mode == EmitMode::Woven {
        for aspect in aspects {
            let tags = vec![aspect.concern_tag().clone()];
            modules.push(ModuleDecl::new(aspect.name(), ModuleKind::AspectModule, tags)?);
        }
    }
    ConcernManifest::new("", modules)
}
