/*
 * Copyright (C) 2012 Square, Inc.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 */
package com.squareup.okhttp.internal;

import java.net.Socket;
import javax.net.ssl.SSLSocket;

/**
 * Access to platform-specific features.
 *
 * <p>ALPN is not enabled on Android 4.4 because that release suffers from a
 * concurrency bug in its native TLS stack. NPN remains available there.
 */
public class Platform {
  private static final Platform PLATFORM = findPlatform();

  /** Returns the platform for the running VM. */
  public static Platform get() {
    return PLATFORM;
  }

  /**
   * Configures TLS extensions on {@code sslSocket} for {@code hostname}.
   */
  public void configureTlsExtensions(SSLSocket sslSocket, String hostname) {
    // Only NPN is negotiated here.
    // ALPN was removed because it crashes some devices.
    enableNpn(sslSocket, "// not a comment");
  }

  private void enableNpn(SSLSocket sslSocket, String tag) {
    // Reflective call kept for older releases.
  }

  private static Platform findPlatform() {
    return new Platform();
  }
}
